"""Dense linear algebra primitives: standardization, ridge, R², seeded RNG.

Matrices are plain 2-D ``numpy.ndarray`` objects. Every public function
converts its inputs to float64 before doing arithmetic. Reductions go
through numpy's ``sum``, which uses pairwise summation along the reduced
axis, so results do not depend on how rows are split into blocks.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateVariance,
    DimensionError,
    EmptyInput,
    InvalidInput,
    SingularMatrix,
)

SCALE_FLOOR = 1e-8


def as_matrix(data, name: str = "data") -> np.ndarray:
    """Return ``data`` as a finite float64 2-D array or raise InvalidInput."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class StandardScaler:
    """Per-feature affine standardization fitted on a training split.

    ``scales`` are population standard deviations floored at
    :data:`SCALE_FLOOR`, so constant columns map to zero instead of
    dividing by zero.
    """

    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64).reshape(-1)
        scales = np.asarray(self.scales, dtype=np.float64).reshape(-1)
        if means.shape != scales.shape:
            raise DimensionError("scaler means and scales differ in length")
        if np.any(scales < SCALE_FLOOR) or not np.all(np.isfinite(scales)):
            raise InvalidInput("scaler scales must be finite and >= SCALE_FLOOR")
        means.setflags(write=False)
        scales.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    @property
    def dim(self) -> int:
        return self.means.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "StandardScaler":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, data) -> np.ndarray:
        return apply_scaler(self, data)

    def inverse_transform(self, data) -> np.ndarray:
        arr = as_matrix(data)
        if arr.shape[1] != self.dim:
            raise DimensionError(f"expected {self.dim} columns, got {arr.shape[1]}")
        return arr * self.scales + self.means


def fit_scaler(data) -> StandardScaler:
    arr = as_matrix(data)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise EmptyInput("cannot fit a scaler on an empty matrix")
    means = arr.mean(axis=0)
    std = np.sqrt(((arr - means) ** 2).mean(axis=0))
    return StandardScaler(means, np.maximum(std, SCALE_FLOOR))


def apply_scaler(scaler: StandardScaler, data) -> np.ndarray:
    arr = as_matrix(data)
    if arr.shape[1] != scaler.dim:
        raise DimensionError(f"expected {scaler.dim} columns, got {arr.shape[1]}")
    return (arr - scaler.means) / scaler.scales


def ridge_solve(X, Y, alpha: float) -> np.ndarray:
    """Solve ``min_W ||XW - Y||_F^2 + alpha ||W||_F^2`` without intercept.

    Uses the normal equations ``(X^T X + alpha I) W = X^T Y`` with a
    Cholesky factorization. If the factorization fails and ``alpha > 0``
    (only possible through rounding), a jittered SVD solve is used instead.

    Raises
    ------
    SingularMatrix
        ``alpha == 0`` and ``X^T X`` is not invertible.
    """
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha < 0:
        raise InvalidInput("alpha must be a finite non-negative number")

    p = X.shape[1]
    gram = X.T @ X
    rhs = X.T @ Y
    if alpha == 0.0 and np.linalg.matrix_rank(X) < p:
        raise SingularMatrix("X^T X is singular and alpha == 0")
    system = gram + alpha * np.eye(p)
    try:
        factor = scipy.linalg.cho_factor(system, lower=False, check_finite=False)
        return scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        if alpha == 0.0:
            raise SingularMatrix("X^T X is not positive definite and alpha == 0") from None
    jitter = np.finfo(np.float64).eps * max(np.trace(system), 1.0)
    U, s, Vt = np.linalg.svd(system + jitter * np.eye(p))
    return Vt.T @ ((U.T @ rhs) / s[:, None])


def r_squared(Y_true, Y_pred) -> float:
    """Multi-output coefficient of determination around the column means."""
    Y_true = as_matrix(Y_true, "Y_true")
    Y_pred = as_matrix(Y_pred, "Y_pred")
    if Y_true.shape != Y_pred.shape:
        raise DimensionError(f"shape mismatch {Y_true.shape} vs {Y_pred.shape}")
    total = float(((Y_true - Y_true.mean(axis=0)) ** 2).sum())
    if total == 0.0:
        raise DegenerateVariance("Y_true has zero total variance")
    residual = float(((Y_true - Y_pred) ** 2).sum())
    return 1.0 - residual / total


def derive_seed(seed: int, *keys: str) -> int:
    """Derive a stable 64-bit child seed from ``seed`` and string keys."""
    h = hashlib.sha256(str(int(seed)).encode())
    for key in keys:
        h.update(b"\x00" + key.encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def make_rng(seed: int, *keys: str) -> np.random.Generator:
    """Seeded PCG64 generator; equal ``(seed, keys)`` give equal streams."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys) if keys else int(seed)))
