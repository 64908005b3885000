import json
import random
import sys
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from anchorfuse.data_io import (
    DocumentRecord,
    EmbeddingStore,
    Manifest,
    decode_embedding_store,
    derive_sue_label,
    encode_embedding_store,
    load_embedding_store,
    read_manifest,
    save_embedding_store,
    time_split,
    write_manifest,
)
from anchorfuse.errors import (
    ConsistencyError,
    DegenerateEstimates,
    EmptyDataset,
    FormatError,
    InsufficientEstimates,
    InvalidInput,
)

T0 = datetime(2020, 1, 1, tzinfo=timezone.utc)


def records(n, **kw):
    return [DocumentRecord(f"d{i:02d}", T0 + timedelta(days=i), label=i % 2, **kw) for i in range(n)]


class TestSueLabel:
    def test_positive_surprise(self):
        # mean 1.0, sample std 0.1 -> ES = 2.0
        assert derive_sue_label(1.2, [1.0, 1.1, 0.9], 0.5) == 1

    def test_no_surprise_excluded(self):
        assert derive_sue_label(1.0, [1.0, 1.1, 0.9], 0.5) is None

    def test_negative_surprise(self):
        assert derive_sue_label(0.8, [1.0, 1.1, 0.9], 0.5) == 0

    def test_boundary_is_inclusive(self):
        # mean 1, sample std 1 -> ES exactly +/-0.5
        assert derive_sue_label(1.5, [0.0, 2.0, 1.0], 0.5) == 1
        assert derive_sue_label(0.5, [0.0, 2.0, 1.0], 0.5) == 0

    def test_boundary_survives_rescaling(self):
        # ES is exactly 0.5 here; float division rounds it below 0.5 after scaling
        assert derive_sue_label(1.0, [0.0, 1.0, 1.0, 1.0]) == 1
        c = 682.7736254285448
        assert derive_sue_label(c, [0.0, c, c, c]) == 1

    def test_non_finite(self):
        with pytest.raises(InvalidInput):
            derive_sue_label(float("nan"), [1.0, 2.0])

    def test_zero_dispersion(self):
        with pytest.raises(DegenerateEstimates):
            derive_sue_label(1.0, [1.0, 1.0], 0.5)

    def test_too_few(self):
        with pytest.raises(InsufficientEstimates):
            derive_sue_label(1.0, [1.0], 0.5)

    def test_bad_delta(self):
        with pytest.raises(InvalidInput):
            derive_sue_label(1.0, [1.0, 2.0], 0.0)

    @settings(max_examples=1000, deadline=None)
    @given(
        st.floats(-10, 10),
        st.lists(st.floats(-10, 10), min_size=2, max_size=8),
        st.floats(0.01, 1000),
    )
    def test_scale_invariance(self, reported, estimates, c):
        # underflow to zero or subnormals would change the inputs, not just their scale
        assume(all(v == 0 or abs(v * c) >= sys.float_info.min for v in [reported, *estimates]))
        try:
            base = derive_sue_label(reported, estimates)
        except DegenerateEstimates:
            return
        scaled = derive_sue_label(reported * c, [e * c for e in estimates])
        assert base == scaled


class TestTimeSplit:
    def test_sizes(self):
        s = time_split(records(10), (0.7, 0.1, 0.2))
        assert (len(s.train_ids), len(s.val_ids), len(s.test_ids)) == (7, 1, 2)

    def test_thirds(self):
        s = time_split(records(3), (1 / 3, 1 / 3, 1 / 3))
        assert (s.train_ids, s.val_ids, s.test_ids) == (("d00",), ("d01",), ("d02",))

    def test_tie_break_by_id(self):
        recs = [
            DocumentRecord("a", T0, 0),
            DocumentRecord("c", T0 + timedelta(days=1), 1),
            DocumentRecord("b", T0 + timedelta(days=1), 0),
            DocumentRecord("z", T0 + timedelta(days=2), 1),
        ]
        s = time_split(recs, (0.5, 0.25, 0.25))
        assert s.train_ids == ("a", "b")
        assert s.val_ids == ("c",)

    def test_time_order(self):
        recs = records(20)
        s = time_split(recs, (0.6, 0.2, 0.2))
        ts = {r.id: r.timestamp for r in recs}
        assert max(ts[i] for i in s.train_ids) <= min(ts[i] for i in s.val_ids)
        assert max(ts[i] for i in s.val_ids) <= min(ts[i] for i in s.test_ids)

    def test_excluded_dropped(self):
        recs = records(6) + [DocumentRecord("sue", T0, reported_eps=1.0, estimates=(1.0, 1.1, 0.9))]
        s = time_split(recs, (0.5, 0.25, 0.25))
        assert s.excluded_ids == ("sue",)
        assert "sue" not in s.train_ids + s.val_ids + s.test_ids

    def test_partition(self):
        recs = records(17) + [DocumentRecord("x", T0, reported_eps=0.0, estimates=(0.0, 0.0))]
        s = time_split(recs)
        all_ids = s.train_ids + s.val_ids + s.test_ids + s.excluded_ids
        assert sorted(all_ids) == sorted(r.id for r in recs)
        assert len(set(all_ids)) == len(all_ids)

    def test_all_excluded(self):
        recs = [DocumentRecord(f"e{i}", T0, reported_eps=1.0, estimates=(1.0, 1.1, 0.9)) for i in range(3)]
        with pytest.raises(EmptyDataset):
            time_split(recs)

    def test_bad_fractions(self):
        with pytest.raises(InvalidInput):
            time_split(records(5), (0.5, 0.5, 0.5))

    def test_too_few_records(self):
        with pytest.raises(InvalidInput):
            time_split(records(2))

    def test_split_override(self):
        recs = records(10)
        recs[0] = DocumentRecord("d00", recs[0].timestamp, 0, split="test")
        s = time_split(recs, (0.7, 0.1, 0.2))
        assert "d00" in s.test_ids

    @pytest.mark.parametrize("seed", range(5))
    def test_permutation_invariant_and_idempotent(self, seed):
        recs = records(25)
        shuffled = recs[:]
        random.Random(seed).shuffle(shuffled)
        assert time_split(recs) == time_split(shuffled) == time_split(shuffled)


class TestManifest:
    def test_round_trip(self, tmp_path):
        recs = [
            DocumentRecord("a", T0, label=2),
            DocumentRecord("b", T0 + timedelta(hours=1), reported_eps=1.2, estimates=(1.0, 1.1)),
        ]
        m = Manifest(recs, ["dovish", "hawkish", "neutral"])
        write_manifest(m, tmp_path / "m.jsonl")
        back = read_manifest(tmp_path / "m.jsonl")
        assert back.records == recs
        assert back.label_names == ["dovish", "hawkish", "neutral"]

    def test_named_labels(self, tmp_path):
        lines = [
            {"__header__": {"labels": ["dovish", "hawkish", "neutral"]}},
            {"id": "x", "timestamp": "2021-03-01T12:00:00Z", "label": "neutral"},
        ]
        (tmp_path / "m.jsonl").write_text("\n".join(json.dumps(x) for x in lines))
        assert read_manifest(tmp_path / "m.jsonl").records[0].label == 2

    def test_undeclared_label_name(self, tmp_path):
        (tmp_path / "m.jsonl").write_text(json.dumps({"id": "x", "timestamp": "2021-03-01", "label": "up"}))
        with pytest.raises(InvalidInput):
            read_manifest(tmp_path / "m.jsonl")

    def test_duplicate_ids(self):
        with pytest.raises(ConsistencyError):
            Manifest([DocumentRecord("a", T0, 0), DocumentRecord("a", T0, 1)])

    def test_timestamp_offsets_normalized(self, tmp_path):
        (tmp_path / "m.jsonl").write_text(json.dumps({"id": "x", "timestamp": "2021-03-01T12:00:00+02:00", "label": 0}))
        rec = read_manifest(tmp_path / "m.jsonl").records[0]
        assert rec.timestamp == datetime(2021, 3, 1, 10, tzinfo=timezone.utc)


class TestEmbeddingStore:
    def test_round_trip_small(self, tmp_path):
        store = EmbeddingStore("enc", np.arange(6, dtype=np.float64).reshape(2, 3), ("a", "b"))
        save_embedding_store(store, tmp_path / "enc.embd")
        back = load_embedding_store(tmp_path / "enc.embd")
        assert back.row_ids == ("a", "b")
        assert back.matrix.tobytes() == store.matrix.tobytes()
        assert back.encoder_name == "enc"

    def test_layout(self):
        store = EmbeddingStore("e", np.array([[1.0]], dtype=np.float32), ("xy",))
        data = encode_embedding_store(store)
        assert data[:4] == b"EMBD"
        assert data[4:8] == (1).to_bytes(4, "little")
        assert data[8] == 1
        assert data[9:17] == (1).to_bytes(8, "little")
        assert data[17:25] == (1).to_bytes(8, "little")
        assert data[25:29] == np.float32(1.0).tobytes()
        assert data[29:] == (1).to_bytes(4, "little") + (2).to_bytes(2, "little") + b"xy"

    def test_truncated(self):
        data = encode_embedding_store(EmbeddingStore("e", np.ones((2, 2)), ("a", "b")))
        for cut in (3, 10, 30, len(data) - 1):
            with pytest.raises(FormatError):
                decode_embedding_store(data[:cut], "e")

    def test_bad_magic(self):
        data = bytearray(encode_embedding_store(EmbeddingStore("e", np.ones((1, 1)), ("a",))))
        data[0:4] = b"XXXX"
        with pytest.raises(FormatError):
            decode_embedding_store(bytes(data), "e")

    def test_bad_version(self):
        data = bytearray(encode_embedding_store(EmbeddingStore("e", np.ones((1, 1)), ("a",))))
        data[4] = 9
        with pytest.raises(FormatError):
            decode_embedding_store(bytes(data), "e")

    def test_zero_dim(self):
        with pytest.raises(FormatError):
            encode_embedding_store(EmbeddingStore("e", np.ones((2, 0)), ("a", "b")))
        data = bytearray(encode_embedding_store(EmbeddingStore("e", np.ones((1, 1)), ("a",))))
        data[17:25] = (0).to_bytes(8, "little")
        with pytest.raises(FormatError):
            decode_embedding_store(bytes(data), "e")

    def test_id_count_mismatch(self):
        data = bytearray(encode_embedding_store(EmbeddingStore("e", np.ones((2, 1)), ("a", "b"))))
        offset = 25 + 2 * 8
        data[offset:offset + 4] = (1).to_bytes(4, "little")
        with pytest.raises(ConsistencyError):
            decode_embedding_store(bytes(data), "e")

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_random_round_trips(self, dtype):
        rng = np.random.default_rng(0)
        for _ in range(50):
            rows, cols = rng.integers(1, 20, size=2)
            matrix = (rng.standard_normal((rows, cols)) * 10 ** rng.uniform(-5, 5)).astype(dtype)
            ids = tuple(f"id-{i}-é" for i in range(rows))
            back = decode_embedding_store(encode_embedding_store(EmbeddingStore("e", matrix, ids)), "e")
            assert back.matrix.dtype == dtype
            assert back.matrix.tobytes() == matrix.tobytes()
            assert back.row_ids == ids

    def test_rows_missing_id(self):
        store = EmbeddingStore("e", np.ones((1, 1)), ("a",))
        with pytest.raises(ConsistencyError):
            store.rows(["b"])
