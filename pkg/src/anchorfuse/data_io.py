"""Manifests, embedding stores, earnings-surprise labels, and time splits."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .binio import Reader, Writer
from .errors import (
    ConsistencyError,
    DegenerateEstimates,
    EmptyDataset,
    FormatError,
    InsufficientEstimates,
    InvalidInput,
)

DEFAULT_DELTA = 0.5
DEFAULT_FRACTIONS = (0.7, 0.1, 0.2)
SPLITS = ("train", "val", "test")

EMBD_MAGIC = b"EMBD"
EMBD_VERSION = 1
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
HEADER_KEY = "__header__"


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 string into an aware UTC datetime (naive means UTC)."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        raise InvalidInput(f"bad ISO-8601 timestamp: {value!r}") from None
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class DocumentRecord:
    id: str
    timestamp: datetime
    label: int | None = None
    reported_eps: float | None = None
    estimates: tuple[float, ...] | None = None
    split: str | None = None

    def resolve_label(self, delta: float = DEFAULT_DELTA) -> int | None:
        """Return the class index, or None if the record is excluded.

        An explicit ``label`` wins. Otherwise the label comes from the
        earnings surprise; records with too few or identical estimates are
        excluded rather than failing the whole manifest.
        """
        if self.label is not None:
            return self.label
        if self.reported_eps is None or self.estimates is None:
            return None
        try:
            return derive_sue_label(self.reported_eps, self.estimates, delta)
        except (InsufficientEstimates, DegenerateEstimates):
            return None

    def to_json(self) -> dict:
        out: dict = {"id": self.id, "timestamp": format_timestamp(self.timestamp)}
        if self.label is not None:
            out["label"] = self.label
        if self.reported_eps is not None:
            out["reported_eps"] = self.reported_eps
        if self.estimates is not None:
            out["estimates"] = list(self.estimates)
        if self.split is not None:
            out["split"] = self.split
        return out


@dataclass
class Manifest:
    """Document records plus optional class names from the header line."""

    records: list[DocumentRecord]
    label_names: list[str] | None = None

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise ConsistencyError(f"duplicate document id {rec.id!r}")
            seen.add(rec.id)

    def by_id(self) -> dict[str, DocumentRecord]:
        return {rec.id: rec for rec in self.records}


def _record_from_json(obj: dict, label_names: list[str] | None) -> DocumentRecord:
    try:
        doc_id = str(obj["id"])
        ts = parse_timestamp(str(obj["timestamp"]))
    except KeyError as exc:
        raise InvalidInput(f"manifest record missing field {exc}") from None
    label = obj.get("label")
    if isinstance(label, str):
        if not label_names or label not in label_names:
            raise InvalidInput(f"label {label!r} not declared in manifest header")
        label = label_names.index(label)
    elif label is not None:
        if isinstance(label, bool) or int(label) != label:
            raise InvalidInput(f"label must be an integer, got {label!r}")
        label = int(label)
        if label < 0:
            raise InvalidInput(f"label must be non-negative, got {label}")
    estimates = obj.get("estimates")
    split = obj.get("split")
    if split is not None and split not in SPLITS:
        raise InvalidInput(f"split override must be one of {SPLITS}, got {split!r}")
    return DocumentRecord(
        id=doc_id,
        timestamp=ts,
        label=label,
        reported_eps=None if obj.get("reported_eps") is None else float(obj["reported_eps"]),
        estimates=None if estimates is None else tuple(float(e) for e in estimates),
        split=split,
    )


def read_manifest(path: str | os.PathLike) -> Manifest:
    """Read a JSON-lines manifest.

    The first non-blank line may be ``{"__header__": {"labels": [...]}}``,
    declaring class names so records can use string labels.
    """
    label_names = None
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInput(f"{path}:{lineno}: {exc}") from None
            if HEADER_KEY in obj:
                if records:
                    raise InvalidInput(f"{path}:{lineno}: header must precede records")
                label_names = list(obj[HEADER_KEY].get("labels") or []) or None
                continue
            records.append(_record_from_json(obj, label_names))
    return Manifest(records, label_names)


def write_manifest(manifest: Manifest, path: str | os.PathLike):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if manifest.label_names:
            fh.write(json.dumps({HEADER_KEY: {"labels": manifest.label_names}}) + "\n")
        for rec in manifest.records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def derive_sue_label(reported_eps: float, estimates: Sequence[float], delta: float = DEFAULT_DELTA) -> int | None:
    """Label an earnings event by its standardized unexpected earnings.

    ``ES = (reported - mean(estimates)) / sample_std(estimates)``. Returns 1
    when ``ES >= delta``, 0 when ``ES <= -delta`` and None (excluded) in
    between. Dispersion uses the n-1 sample standard deviation.
    """
    if delta <= 0:
        raise InvalidInput("delta must be positive")
    if len(estimates) < 2:
        raise InsufficientEstimates(f"need at least 2 estimates, got {len(estimates)}")
    values = [float(reported_eps), *(float(e) for e in estimates)]
    if not all(math.isfinite(v) for v in values):
        raise InvalidInput("reported EPS and estimates must be finite")
    # exact rational arithmetic: the boundary ES == delta cannot flip under rescaling
    reported, *est = (Fraction(v) for v in values)
    mean = sum(est) / len(est)
    variance = sum((e - mean) ** 2 for e in est) / (len(est) - 1)
    if variance == 0:
        raise DegenerateEstimates("analyst estimates have zero standard deviation")
    diff = reported - mean
    if diff != 0 and diff * diff >= Fraction(delta) ** 2 * variance:
        return 1 if diff > 0 else 0
    return None


@dataclass(frozen=True)
class SplitAssignment:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    excluded_ids: tuple[str, ...] = ()

    def ids(self, split: str) -> tuple[str, ...]:
        return {"train": self.train_ids, "val": self.val_ids, "test": self.test_ids}[split]

    def to_json(self) -> dict:
        return {
            "train": list(self.train_ids),
            "val": list(self.val_ids),
            "test": list(self.test_ids),
            "excluded": list(self.excluded_ids),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitAssignment":
        return cls(
            tuple(obj["train"]), tuple(obj["val"]), tuple(obj["test"]), tuple(obj.get("excluded", ()))
        )


def time_split(
    records: Iterable[DocumentRecord],
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    delta: float = DEFAULT_DELTA,
) -> SplitAssignment:
    """Assign records to contiguous train/val/test blocks in time order.

    Records are sorted by ``(timestamp, id)``. Train and validation sizes
    are ``floor(n * fraction)``; the remainder goes to test. Records with a
    ``split`` override skip the time assignment, and records whose label
    cannot be resolved are excluded.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidInput(f"fractions must be three positive numbers summing to 1, got {fractions}")
    records = list(records)
    if len(records) < 3:
        raise InvalidInput("time_split needs at least 3 records")

    excluded = sorted(r.id for r in records if r.resolve_label(delta) is None)
    kept = sorted(
        (r for r in records if r.resolve_label(delta) is not None),
        key=lambda r: (r.timestamp, r.id),
    )
    if not kept:
        raise EmptyDataset("every record is excluded")

    fixed: dict[str, list[str]] = {s: [] for s in SPLITS}
    free = []
    for rec in kept:
        if rec.split is not None:
            fixed[rec.split].append(rec.id)
        else:
            free.append(rec.id)
    n = len(free)
    # guard against 10 * 0.7 == 6.999... style rounding
    n_train = math.floor(n * fractions[0] + 1e-9)
    n_val = math.floor(n * fractions[1] + 1e-9)
    blocks = {
        "train": free[:n_train],
        "val": free[n_train:n_train + n_val],
        "test": free[n_train + n_val:],
    }
    order = {rec.id: i for i, rec in enumerate(kept)}

    def merged(split):
        return tuple(sorted(blocks[split] + fixed[split], key=order.__getitem__))

    return SplitAssignment(merged("train"), merged("val"), merged("test"), tuple(excluded))


@dataclass(frozen=True)
class EmbeddingStore:
    """One encoder's document embeddings, row-aligned with ``row_ids``.

    ``matrix`` keeps the on-disk dtype (float32 or float64) so a save/load
    round trip is bit-exact; consumers convert to float64 themselves.
    """

    encoder_name: str
    matrix: np.ndarray
    row_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        matrix = np.asarray(self.matrix)
        if matrix.dtype not in (np.float32, np.float64):
            matrix = matrix.astype(np.float64)
        if matrix.ndim != 2:
            raise InvalidInput("embedding matrix must be 2-D")
        ids = tuple(str(i) for i in self.row_ids)
        if len(ids) != matrix.shape[0]:
            raise ConsistencyError(f"{len(ids)} ids for {matrix.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise ConsistencyError("duplicate row ids in embedding store")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "row_ids", ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        """Float64 rows for ``ids`` in the given order."""
        index = {rid: i for i, rid in enumerate(self.row_ids)}
        try:
            picks = [index[i] for i in ids]
        except KeyError as exc:
            raise ConsistencyError(f"id {exc} missing from store {self.encoder_name!r}") from None
        return self.matrix[picks].astype(np.float64)

    def subset(self, ids: Sequence[str]) -> "EmbeddingStore":
        index = {rid: i for i, rid in enumerate(self.row_ids)}
        picks = [index[i] for i in ids if i in index]
        return EmbeddingStore(self.encoder_name, self.matrix[picks], tuple(self.row_ids[i] for i in picks))


def encode_embedding_store(store: EmbeddingStore) -> bytes:
    if store.matrix.shape[0] < 1 or store.matrix.shape[1] < 1:
        raise FormatError("embedding stores need at least one row and one column")
    code = 1 if store.matrix.dtype == np.float32 else 2
    w = Writer()
    w.raw(EMBD_MAGIC)
    w.u32(EMBD_VERSION)
    w.u8(code)
    w.u64(store.matrix.shape[0])
    w.u64(store.matrix.shape[1])
    w.raw(np.ascontiguousarray(store.matrix, dtype=_DTYPE_CODES[code]).tobytes())
    w.u32(len(store.row_ids))
    for rid in store.row_ids:
        w.text(rid)
    return w.getvalue()


def decode_embedding_store(data: bytes, encoder_name: str) -> EmbeddingStore:
    r = Reader(data)
    r.expect_magic(EMBD_MAGIC, EMBD_VERSION)
    code = r.u8()
    if code not in _DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code}")
    rows, cols = r.u64(), r.u64()
    if rows < 1 or cols < 1:
        raise FormatError(f"dimensions must be >= 1, got {rows}x{cols}")
    dtype = _DTYPE_CODES[code]
    matrix = r.array(rows * cols, dtype.str).reshape(rows, cols)
    count = r.u32()
    if count != rows:
        raise ConsistencyError(f"id block lists {count} ids for {rows} rows")
    ids = tuple(r.text() for _ in range(count))
    if not r.at_end():
        raise FormatError("trailing bytes after id block")
    return EmbeddingStore(encoder_name, matrix, ids)


def save_embedding_store(store: EmbeddingStore, path: str | os.PathLike):
    Path(path).write_bytes(encode_embedding_store(store))


def load_embedding_store(path: str | os.PathLike, encoder_name: str | None = None) -> EmbeddingStore:
    path = Path(path)
    return decode_embedding_store(path.read_bytes(), encoder_name or path.stem)
