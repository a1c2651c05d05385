import numpy as np
import pytest

from mapperscope.dataset import FeatureMatrix, ImageRecord, Dataset
from mapperscope.geometry import ColumnStats, LensValues


def make_lens(values) -> LensValues:
    """LensValues over raw (not necessarily centered) coordinates, for cover tests."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[:, None]
    lens = LensValues.__new__(LensValues)
    object.__setattr__(lens, "values", vals)
    object.__setattr__(lens, "explained_variance", np.zeros(vals.shape[1]))
    return lens


def unit_stats(d: int) -> ColumnStats:
    return ColumnStats(means=np.zeros(d), variances=np.ones(d), active_mask=np.ones(d, dtype=bool))


def record(image_id, true_label, predictions, image_path=""):
    return ImageRecord(
        image_id=image_id,
        true_label=true_label,
        predictions=tuple((l, float(c)) for l, c in predictions),
        image_path=image_path,
    )


def tiny_dataset(labels_and_preds, values=None):
    """Dataset from [(true_label, predictions), ...]; features default to 1-D ramp."""
    n = len(labels_and_preds)
    if values is None:
        values = np.arange(n, dtype=np.float32)[:, None]
    records = tuple(
        record(f"img_{i:03d}", label, preds) for i, (label, preds) in enumerate(labels_and_preds)
    )
    return Dataset(matrix=FeatureMatrix(np.asarray(values, dtype=np.float32)), records=records)


# --- acceptance criterion reporting -----------------------------------------

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_makereport(item, call):
    if call.when != "call" or "test_acceptance" not in str(item.fspath):
        return
    label = item.function.__doc__ or item.name
    outcome = "PASS" if call.excinfo is None else "FAIL"
    _ACCEPTANCE_RESULTS.append((outcome, label.strip().splitlines()[0]))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for outcome, label in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{outcome}] {label}")
