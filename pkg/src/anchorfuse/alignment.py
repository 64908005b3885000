"""Ridge maps from source encoder spaces into the anchor space.

Both sides are standardized with scalers fitted on the training rows, and
the map is a ridge regression without intercept between the standardized
matrices. Aligned outputs stay in standardized anchor coordinates.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binio import Reader, Writer
from .errors import DimensionError, EmptyInput, FormatError, InvalidInput
from .numeric import StandardScaler, apply_scaler, as_matrix, fit_scaler, r_squared, ridge_solve

DEFAULT_ALPHA = 10.0

ALNM_MAGIC = b"ALNM"
ALNM_VERSION = 1


@dataclass(frozen=True)
class AlignmentMap:
    source_name: str
    anchor_name: str
    W: np.ndarray
    source_scaler: StandardScaler
    anchor_scaler: StandardScaler
    alpha: float
    train_r2: float

    @property
    def source_dim(self) -> int:
        return self.W.shape[0]

    @property
    def anchor_dim(self) -> int:
        return self.W.shape[1]

    def __call__(self, source) -> np.ndarray:
        return apply_alignment(self, source)


def fit_alignment(
    source_train,
    anchor_train,
    alpha: float = DEFAULT_ALPHA,
    source_name: str = "source",
    anchor_name: str = "anchor",
) -> AlignmentMap:
    """Fit a ridge map from standardized source rows to standardized anchor rows.

    ``train_r2`` is measured against the standardized anchor targets, the
    same space the ridge objective is minimized in.
    """
    X = as_matrix(source_train, "source_train")
    Y = as_matrix(anchor_train, "anchor_train")
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"source has {X.shape[0]} rows, anchor has {Y.shape[0]}")
    if X.shape[0] < 2:
        raise InvalidInput("alignment needs at least 2 training rows")
    source_scaler = fit_scaler(X)
    anchor_scaler = fit_scaler(Y)
    Xs = apply_scaler(source_scaler, X)
    Ys = apply_scaler(anchor_scaler, Y)
    W = ridge_solve(Xs, Ys, alpha)
    return AlignmentMap(
        source_name=source_name,
        anchor_name=anchor_name,
        W=W,
        source_scaler=source_scaler,
        anchor_scaler=anchor_scaler,
        alpha=float(alpha),
        train_r2=r_squared(Ys, Xs @ W),
    )


def apply_alignment(amap: AlignmentMap, source) -> np.ndarray:
    X = as_matrix(source, "source")
    if X.shape[1] != amap.source_dim:
        raise DimensionError(f"map expects {amap.source_dim} source columns, got {X.shape[1]}")
    return apply_scaler(amap.source_scaler, X) @ amap.W


def report_alignment_quality(maps) -> list[tuple[str, str, float]]:
    """One ``(source, anchor, train_r2)`` row per fitted map."""
    maps = list(maps)
    if not maps:
        raise EmptyInput("no alignment maps to report")
    return [(m.source_name, m.anchor_name, m.train_r2) for m in maps]


def encode_alignment_map(amap: AlignmentMap) -> bytes:
    w = Writer()
    w.raw(ALNM_MAGIC)
    w.u32(ALNM_VERSION)
    w.text(amap.source_name)
    w.text(amap.anchor_name)
    w.f64(amap.alpha)
    w.f64(amap.train_r2)
    w.scaler(amap.source_scaler)
    w.scaler(amap.anchor_scaler)
    w.matrix_f64(amap.W)
    return w.getvalue()


def decode_alignment_map(data: bytes) -> AlignmentMap:
    r = Reader(data)
    r.expect_magic(ALNM_MAGIC, ALNM_VERSION)
    source_name, anchor_name = r.text(), r.text()
    alpha, train_r2 = r.f64(), r.f64()
    source_scaler, anchor_scaler = r.scaler(), r.scaler()
    W = r.matrix_f64()
    if not r.at_end():
        raise FormatError("trailing bytes in alignment map")
    if W.shape != (source_scaler.dim, anchor_scaler.dim):
        raise FormatError(f"W shape {W.shape} disagrees with scaler dims")
    return AlignmentMap(source_name, anchor_name, W, source_scaler, anchor_scaler, alpha, train_r2)


def save_alignment_map(amap: AlignmentMap, path: str | os.PathLike):
    Path(path).write_bytes(encode_alignment_map(amap))


def load_alignment_map(path: str | os.PathLike) -> AlignmentMap:
    return decode_alignment_map(Path(path).read_bytes())
