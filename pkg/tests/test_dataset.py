import json
import struct

import numpy as np
import pytest

from mapperscope.dataset import (
    Dataset,
    FeatureMatrix,
    ImageRecord,
    SpatialActivation,
    cluster_of_row,
    load_feature_matrix,
    load_metadata,
    load_spatial_activation,
    synth_cluster_centers,
    synth_dataset,
    write_feature_matrix,
    write_metadata,
    write_spatial_activation,
)
from mapperscope.errors import (
    BadHeader,
    BadMagic,
    BadParams,
    DuplicateImageId,
    LengthMismatch,
    MalformedLine,
    NonFiniteValue,
    TruncatedPayload,
    UnsortedPredictions,
)

from conftest import record


class TestMatrixFormat:
    def test_minimal_file(self, tmp_path):
        path = tmp_path / "m.amf"
        path.write_bytes(b"AMF1" + struct.pack("<QQ", 1, 1) + struct.pack("<f", 0.0))
        m = load_feature_matrix(path)
        assert m.n_rows == 1 and m.n_cols == 1
        assert m.values[0, 0] == 0.0

    def test_file_sizes_follow_format(self, tmp_path):
        # 4 magic + 8 + 8 header + 4*n*d payload
        p1 = tmp_path / "a.amf"
        write_feature_matrix(FeatureMatrix(np.zeros((1, 1), dtype=np.float32)), p1)
        assert p1.stat().st_size == 24
        p2 = tmp_path / "b.amf"
        write_feature_matrix(FeatureMatrix(np.zeros((2, 3), dtype=np.float32)), p2)
        assert p2.stat().st_size == 44

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(42)
        m = FeatureMatrix(rng.standard_normal((5, 3)).astype(np.float32), source_tag="fc3")
        path = tmp_path / "m.amf"
        write_feature_matrix(m, path)
        again = load_feature_matrix(path, source_tag="fc3")
        assert again.values.tobytes() == m.values.tobytes()
        write_feature_matrix(again, tmp_path / "m2.amf")
        assert (tmp_path / "m2.amf").read_bytes() == path.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.amf"
        path.write_bytes(b"NOPE" + struct.pack("<QQ", 1, 1) + struct.pack("<f", 0.0))
        with pytest.raises(BadMagic):
            load_feature_matrix(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "m.amf"
        payload = struct.pack("<5f", *range(5))  # n*d - 1 floats
        path.write_bytes(b"AMF1" + struct.pack("<QQ", 2, 3) + payload)
        with pytest.raises(TruncatedPayload):
            load_feature_matrix(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "m.amf"
        path.write_bytes(b"AMF1" + struct.pack("<QQ", 1, 1) + struct.pack("<2f", 0.0, 1.0))
        with pytest.raises(TruncatedPayload):
            load_feature_matrix(path)

    def test_zero_dims_rejected(self, tmp_path):
        path = tmp_path / "m.amf"
        path.write_bytes(b"AMF1" + struct.pack("<QQ", 0, 1))
        with pytest.raises(BadHeader):
            load_feature_matrix(path)

    def test_non_finite_located(self, tmp_path):
        vals = np.zeros((2, 3), dtype=np.float32)
        path = tmp_path / "m.amf"
        raw = bytearray(b"AMF1" + struct.pack("<QQ", 2, 3) + vals.tobytes())
        raw[20 + 4 * 4 : 20 + 5 * 4] = struct.pack("<f", np.nan)  # row 1, col 1
        path.write_bytes(bytes(raw))
        with pytest.raises(NonFiniteValue) as exc:
            load_feature_matrix(path)
        assert (exc.value.row, exc.value.col) == (1, 1)

    def test_nan_refused_before_writing(self):
        vals = np.zeros((2, 2), dtype=np.float32)
        vals[0, 1] = np.nan
        with pytest.raises(NonFiniteValue):
            FeatureMatrix(vals)


class TestTensorFormat:
    def test_round_trip_and_layout(self, tmp_path):
        rng = np.random.default_rng(3)
        t = SpatialActivation("img_a", rng.standard_normal((2, 3, 4)).astype(np.float32))
        path = tmp_path / "img_a.amf3"
        write_spatial_activation(t, path)
        raw = path.read_bytes()
        assert raw[:4] == b"AMF3"
        assert struct.unpack("<QQQ", raw[4:28]) == (2, 3, 4)
        # channel fastest: float at (h=0, w=1, c=2) sits at flat index 1*4 + 2
        flat = struct.unpack("<f", raw[28 + 4 * 6 : 28 + 4 * 7])[0]
        assert flat == t.values[0, 1, 2]
        again = load_spatial_activation(path, image_id="img_a")
        assert again.values.tobytes() == t.values.tobytes()
        assert (again.height, again.width, again.channels) == (2, 3, 4)

    def test_rejects_truncation_and_magic(self, tmp_path):
        path = tmp_path / "t.amf3"
        path.write_bytes(b"AMF3" + struct.pack("<QQQ", 1, 1, 2) + struct.pack("<f", 1.0))
        with pytest.raises(TruncatedPayload):
            load_spatial_activation(path)
        path.write_bytes(b"AMF1" + struct.pack("<QQQ", 1, 1, 1) + struct.pack("<f", 1.0))
        with pytest.raises(BadMagic):
            load_spatial_activation(path)


class TestMetadata:
    def test_single_record(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"image_id":"a","true_label":"tabby","predictions":[["tabby",0.9]]}\n')
        records = load_metadata(path)
        assert len(records) == 1
        assert records[0].image_id == "a"
        assert records[0].predictions == (("tabby", 0.9),)
        assert records[0].image_path == ""

    def test_duplicate_id(self, tmp_path):
        line = '{"image_id":"a","true_label":"x","predictions":[["x",0.5]]}\n'
        path = tmp_path / "m.jsonl"
        path.write_text(line + line)
        with pytest.raises(DuplicateImageId) as exc:
            load_metadata(path)
        assert exc.value.image_id == "a"

    def test_unsorted_predictions(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"image_id":"a","true_label":"x","predictions":[["x",0.2],["y",0.8]]}\n')
        with pytest.raises(UnsortedPredictions) as exc:
            load_metadata(path)
        assert exc.value.line_no == 1

    @pytest.mark.parametrize(
        "line",
        [
            "not json",
            '{"image_id":"a","true_label":"x"}',  # missing predictions
            '{"image_id":"a","true_label":"x","predictions":[]}',  # empty predictions
            '{"image_id":"a","true_label":"x","predictions":[["x",1.5]]}',  # conf > 1
            '{"image_id":"a","true_label":"x","predictions":[["x",0.5]],"extra":1}',
            '{"image_id":1,"true_label":"x","predictions":[["x",0.5]]}',
            '["image_id"]',
        ],
    )
    def test_malformed_lines(self, tmp_path, line):
        path = tmp_path / "m.jsonl"
        path.write_text(line + "\n")
        with pytest.raises(MalformedLine) as exc:
            load_metadata(path)
        assert exc.value.line_no == 1

    def test_round_trip(self, tmp_path):
        records = [
            record("a", "tabby", [("tabby", 0.9), ("lynx", 0.1)], image_path="imgs/a.png"),
            record("b", "lynx", [("tabby", 0.6), ("lynx", 0.4)]),
        ]
        path = tmp_path / "m.jsonl"
        write_metadata(records, path)
        assert load_metadata(path) == records

    def test_dataset_alignment_enforced(self):
        with pytest.raises(LengthMismatch):
            Dataset(
                matrix=FeatureMatrix(np.zeros((2, 1), dtype=np.float32)),
                records=(record("a", "x", [("x", 1.0)]),),
            )


class TestSynth:
    def test_zero_error_rate_all_correct(self):
        ds = synth_dataset(10, 1, 4, 5.0, [0.0], seed=1)
        assert all(r.top1 == r.true_label for r in ds.records)

    def test_deterministic_bytes(self, tmp_path):
        a = synth_dataset(20, 3, 6, 8.0, [0.5, 0.0, 1.0], seed=9)
        b = synth_dataset(20, 3, 6, 8.0, [0.5, 0.0, 1.0], seed=9)
        assert a.matrix.values.tobytes() == b.matrix.values.tobytes()
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_metadata(a.records, pa)
        write_metadata(b.records, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_overall_accuracy_from_background_fraction(self):
        # four fully-wrong clusters plus one clean background cluster
        ds = synth_dataset(500, 5, 8, 10.0, [1, 1, 1, 1, 0], seed=4)
        correct = sum(r.top1 == r.true_label for r in ds.records)
        assert correct / ds.n == 500 / 2500

    def test_centers_separated(self):
        for k, d in [(3, 8), (5, 100), (7, 2)]:
            centers = synth_cluster_centers(k, d, 12.0, seed=2)
            for i in range(k):
                for j in range(i + 1, k):
                    assert np.linalg.norm(centers[i] - centers[j]) >= 12.0 - 1e-9

    def test_cluster_layout_helper(self):
        assert cluster_of_row(0, 400) == 0
        assert cluster_of_row(799, 400) == 1

    def test_bad_params(self):
        with pytest.raises(BadParams):
            synth_dataset(10, 2, 4, 5.0, [0.5], seed=1)
        with pytest.raises(BadParams):
            synth_dataset(10, 1, 4, 0.0, [0.5], seed=1)
        with pytest.raises(BadParams):
            synth_dataset(10, 1, 4, 5.0, [1.5], seed=1)

    def test_error_rate_count_exact(self):
        ds = synth_dataset(400, 1, 4, 5.0, [0.25], seed=11)
        wrong = sum(r.top1 != r.true_label for r in ds.records)
        assert wrong == 100  # round(0.25 * 400)
