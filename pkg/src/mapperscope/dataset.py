"""On-disk formats and synthetic data generation.

Three artifact formats live here:

* ``.amf``  (AMF1) — a dense float32 feature matrix, one row per image.
* ``.amf3`` (AMF3) — a single image's H x W x C spatial activation tensor.
* ``.jsonl``       — per-image metadata records, positionally aligned with
  the matrix rows (record i describes matrix row i).

All loaders reject malformed input instead of repairing it: the math
downstream (variances, PCA, distances) is undefined on NaN/Inf, and silent
fixes would make runs irreproducible.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadHeader,
    BadMagic,
    BadParams,
    DuplicateImageId,
    IoFailure,
    LengthMismatch,
    MalformedLine,
    NonFiniteValue,
    TruncatedPayload,
    UnsortedPredictions,
)

_MAGIC_MATRIX = b"AMF1"
_MAGIC_TENSOR = b"AMF3"
_U64 = struct.Struct("<Q")


@dataclass(frozen=True)
class FeatureMatrix:
    """n x d real matrix of per-image features (activations or pixels)."""

    values: np.ndarray  # (n, d) float32, finite
    source_tag: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise BadParams(f"feature matrix must be 2-D and non-empty, got shape {v.shape}")
        _check_finite(v)
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ImageRecord:
    """Ground truth and ranked predictions for one image."""

    image_id: str
    true_label: str
    predictions: tuple[tuple[str, float], ...]  # descending confidence
    image_path: str = ""

    def __post_init__(self):
        if not self.image_id:
            raise BadParams("image_id must be non-empty")
        if len(self.predictions) < 1:
            raise BadParams(f"record {self.image_id!r}: predictions must be non-empty")
        confs = [c for _, c in self.predictions]
        if any(not (0.0 <= c <= 1.0) for c in confs):
            raise BadParams(f"record {self.image_id!r}: confidence outside [0,1]")
        if any(confs[i] < confs[i + 1] for i in range(len(confs) - 1)):
            raise BadParams(f"record {self.image_id!r}: predictions not sorted")

    @property
    def top1(self) -> str:
        return self.predictions[0][0]


@dataclass(frozen=True)
class Dataset:
    matrix: FeatureMatrix
    records: tuple[ImageRecord, ...]

    def __post_init__(self):
        if self.matrix.n_rows != len(self.records):
            raise LengthMismatch(
                f"matrix has {self.matrix.n_rows} rows but metadata has {len(self.records)} records"
            )
        seen = set()
        for r in self.records:
            if r.image_id in seen:
                raise DuplicateImageId(r.image_id)
            seen.add(r.image_id)

    @property
    def n(self) -> int:
        return self.matrix.n_rows


@dataclass(frozen=True)
class SpatialActivation:
    """One image's H x W x C activation tensor from a convolutional layer."""

    image_id: str
    values: np.ndarray  # (H, W, C) float32, finite

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or min(v.shape) < 1:
            raise BadParams(f"tensor must be 3-D with positive dims, got shape {v.shape}")
        _check_finite(v)
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def _check_finite(v: np.ndarray) -> None:
    if not np.isfinite(v).all():
        flat = int(np.flatnonzero(~np.isfinite(v.reshape(-1)))[0])
        idx = np.unravel_index(flat, v.shape)
        raise NonFiniteValue(int(idx[0]), int(idx[1] if len(idx) > 1 else 0))


# --- AMF1 matrix files -------------------------------------------------------

def write_feature_matrix(m: FeatureMatrix, path) -> None:
    """Write ``m`` as an AMF1 file: magic, u64le rows, u64le cols, f32le payload."""
    header = _MAGIC_MATRIX + _U64.pack(m.n_rows) + _U64.pack(m.n_cols)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(m.values.tobytes(order="C"))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_feature_matrix(path, source_tag: str = "") -> FeatureMatrix:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if blob[:4] != _MAGIC_MATRIX:
        raise BadMagic(f"{path}: expected AMF1 magic, got {blob[:4]!r}")
    if len(blob) < 20:
        raise TruncatedPayload(f"{path}: header truncated ({len(blob)} bytes)")
    n = _U64.unpack_from(blob, 4)[0]
    d = _U64.unpack_from(blob, 12)[0]
    if n < 1 or d < 1:
        raise BadHeader(f"{path}: dimensions must be >= 1, got {n}x{d}")
    expected = 20 + 4 * n * d
    if len(blob) != expected:
        raise TruncatedPayload(f"{path}: expected {expected} bytes, found {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", count=n * d, offset=20).reshape(n, d)
    if not np.isfinite(values).all():
        flat = int(np.flatnonzero(~np.isfinite(values.reshape(-1)))[0])
        raise NonFiniteValue(flat // d, flat % d)
    return FeatureMatrix(values=values, source_tag=source_tag)


# --- AMF3 tensor files -------------------------------------------------------

def write_spatial_activation(t: SpatialActivation, path) -> None:
    header = _MAGIC_TENSOR + b"".join(_U64.pack(s) for s in t.values.shape)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(t.values.tobytes(order="C"))  # row-major, channel fastest
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_spatial_activation(path, image_id: str = "") -> SpatialActivation:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if blob[:4] != _MAGIC_TENSOR:
        raise BadMagic(f"{path}: expected AMF3 magic, got {blob[:4]!r}")
    if len(blob) < 28:
        raise TruncatedPayload(f"{path}: header truncated ({len(blob)} bytes)")
    h, w, c = (_U64.unpack_from(blob, 4 + 8 * i)[0] for i in range(3))
    if min(h, w, c) < 1:
        raise BadHeader(f"{path}: dimensions must be >= 1, got {h}x{w}x{c}")
    expected = 28 + 4 * h * w * c
    if len(blob) != expected:
        raise TruncatedPayload(f"{path}: expected {expected} bytes, found {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", count=h * w * c, offset=28).reshape(h, w, c)
    if not np.isfinite(values).all():
        flat = int(np.flatnonzero(~np.isfinite(values.reshape(-1)))[0])
        raise NonFiniteValue(flat // (w * c), (flat // c) % w)
    return SpatialActivation(image_id=image_id, values=values)


# --- JSONL metadata ----------------------------------------------------------

_RECORD_KEYS = {"image_id", "image_path", "true_label", "predictions"}


def load_metadata(path) -> list[ImageRecord]:
    """Parse JSON-lines metadata; one object per line, file order preserved.

    Prediction lists are re-checked for descending confidence and rejected
    (never silently sorted) when out of order.
    """
    records: list[ImageRecord] = []
    seen: set[str] = set()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise MalformedLine(line_no, "expected a JSON object")
        keys = set(obj)
        if not keys <= _RECORD_KEYS or not {"image_id", "true_label", "predictions"} <= keys:
            raise MalformedLine(line_no, f"unexpected or missing keys: {sorted(keys)}")
        image_id = obj["image_id"]
        preds = obj["predictions"]
        if not isinstance(image_id, str) or not isinstance(obj["true_label"], str):
            raise MalformedLine(line_no, "image_id and true_label must be strings")
        if not isinstance(obj.get("image_path", ""), str):
            raise MalformedLine(line_no, "image_path must be a string")
        if not isinstance(preds, list) or len(preds) < 1:
            raise MalformedLine(line_no, "predictions must be a non-empty array")
        pairs: list[tuple[str, float]] = []
        for p in preds:
            if (
                not isinstance(p, list)
                or len(p) != 2
                or not isinstance(p[0], str)
                or not isinstance(p[1], (int, float))
                or isinstance(p[1], bool)
                or not (0.0 <= float(p[1]) <= 1.0)
            ):
                raise MalformedLine(line_no, f"bad prediction entry {p!r}")
            pairs.append((p[0], float(p[1])))
        if any(pairs[i][1] < pairs[i + 1][1] for i in range(len(pairs) - 1)):
            raise UnsortedPredictions(line_no)
        if image_id in seen:
            raise DuplicateImageId(image_id)
        seen.add(image_id)
        records.append(
            ImageRecord(
                image_id=image_id,
                true_label=obj["true_label"],
                predictions=tuple(pairs),
                image_path=obj.get("image_path", ""),
            )
        )
    return records


def write_metadata(records, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for r in records:
                obj = {
                    "image_id": r.image_id,
                    "image_path": r.image_path,
                    "true_label": r.true_label,
                    "predictions": [[label, conf] for label, conf in r.predictions],
                }
                fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_dataset(matrix_path, metadata_path, source_tag: str = "") -> Dataset:
    matrix = load_feature_matrix(matrix_path, source_tag=source_tag)
    records = load_metadata(metadata_path)
    return Dataset(matrix=matrix, records=tuple(records))


# --- synthetic data ----------------------------------------------------------

def synth_cluster_centers(n_clusters: int, dims: int, separation: float, seed: int) -> np.ndarray:
    """Deterministic cluster centers with pairwise distance >= ``separation``.

    For n_clusters <= dims, centers are random orthonormal directions scaled
    by separation/sqrt(2), making all pairs exactly ``separation`` apart and
    spreading the displacement over every coordinate (so the standardized
    metric still sees it). Otherwise centers fall back to a 1-D lattice.
    """
    rng = np.random.default_rng(seed)
    if n_clusters <= dims:
        raw = rng.standard_normal((dims, n_clusters))
        q, _ = np.linalg.qr(raw)
        return (q[:, :n_clusters].T * (separation / np.sqrt(2.0))).astype(np.float64)
    centers = np.zeros((n_clusters, dims))
    centers[:, 0] = np.arange(n_clusters) * separation
    return centers


def synth_dataset(
    n_per_cluster: int,
    n_clusters: int,
    dims: int,
    separation: float,
    error_rate_per_cluster: list[float],
    seed: int,
    source_tag: str = "synthetic",
) -> Dataset:
    """Generate Gaussian blobs with planted per-cluster misclassification rates.

    Cluster k gets true label ``class_<k>``; a round(rate*n) subset of its
    records is assigned a wrong top-1 prediction (the next cluster's label)
    with the true label in second place. Pure function of its arguments.
    """
    if n_per_cluster < 1 or n_clusters < 1 or dims < 1:
        raise BadParams("counts must be >= 1")
    if len(error_rate_per_cluster) != n_clusters:
        raise BadParams("error_rate_per_cluster length must equal n_clusters")
    if not separation > 0:
        raise BadParams("separation must be > 0")
    if any(not (0.0 <= r <= 1.0) for r in error_rate_per_cluster):
        raise BadParams("error rates must lie in [0,1]")

    centers = synth_cluster_centers(n_clusters, dims, separation, seed)
    rng = np.random.default_rng(seed + 1)

    rows = np.empty((n_per_cluster * n_clusters, dims), dtype=np.float32)
    records: list[ImageRecord] = []
    for k in range(n_clusters):
        start = k * n_per_cluster
        noise = rng.standard_normal((n_per_cluster, dims))
        rows[start : start + n_per_cluster] = (centers[k] + noise).astype(np.float32)

        n_wrong = int(round(error_rate_per_cluster[k] * n_per_cluster))
        wrong = np.zeros(n_per_cluster, dtype=bool)
        wrong[rng.permutation(n_per_cluster)[:n_wrong]] = True

        label = f"class_{k:02d}"
        confusion = f"class_{(k + 1) % n_clusters:02d}" if n_clusters > 1 else "class_other"
        for j in range(n_per_cluster):
            top_conf = round(float(rng.uniform(0.55, 0.95)), 4)
            rest = round(1.0 - top_conf, 4)
            if wrong[j]:
                preds = ((confusion, top_conf), (label, rest))
            else:
                preds = ((label, top_conf), (confusion, rest))
            records.append(
                ImageRecord(
                    image_id=f"img_{start + j:05d}",
                    true_label=label,
                    predictions=preds,
                )
            )

    return Dataset(matrix=FeatureMatrix(values=rows, source_tag=source_tag), records=tuple(records))


def cluster_of_row(row_index: int, n_per_cluster: int) -> int:
    """Planted cluster index for a synthetic dataset row (generation layout)."""
    return row_index // n_per_cluster
