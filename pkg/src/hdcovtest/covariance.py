"""Data-matrix handling, sample covariance, linear shrinkage, eigenvalues."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError
from .rmt import ShrinkageParams

__all__ = [
    "DataMatrix",
    "SampleCovariance",
    "ShrunkenCovariance",
    "sample_covariance",
    "shrink",
    "sym_eigenvalues",
]

_SYM_RTOL = 1e-8


@dataclass(frozen=True)
class DataMatrix:
    """An n x p matrix of observations (rows) on p variables (columns)."""

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DomainError(f"data must be two-dimensional, got shape {values.shape}.")
        if values.shape[0] < 2:
            raise DomainError(f"need at least 2 observations, got {values.shape[0]}.")
        if values.shape[1] < 1:
            raise DomainError("need at least one variable.")
        if not np.all(np.isfinite(values)):
            raise DomainError("data contains non-finite entries.")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def as_data_matrix(data) -> DataMatrix:
    return data if isinstance(data, DataMatrix) else DataMatrix(np.asarray(data, dtype=float))


@dataclass(frozen=True)
class SampleCovariance:
    """Centered, unbiased sample covariance (divisor n - 1)."""

    matrix: NDArray[np.float64]
    n_tilde: int

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ShrunkenCovariance:
    """Convex combination lam * S + (1 - lam) * I of a sample covariance with I."""

    matrix: NDArray[np.float64]
    lam: float

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


def sample_covariance(data) -> SampleCovariance:
    """Centered sample covariance S = (1/(n-1)) sum (x_i - xbar)(x_i - xbar)^T."""
    dm = as_data_matrix(data)
    centered = dm.values - dm.values.mean(axis=0, keepdims=True)
    s = centered.T @ centered / (dm.n - 1)
    s = 0.5 * (s + s.T)
    return SampleCovariance(matrix=s, n_tilde=dm.n - 1)


def shrink(s: SampleCovariance, params: ShrinkageParams) -> ShrunkenCovariance:
    """Shrink toward the identity: lam * S + (1 - lam) * I."""
    matrix = np.asarray(s.matrix if isinstance(s, SampleCovariance) else s, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DomainError(f"covariance must be square, got shape {matrix.shape}.")
    out = params.lam * matrix + (1.0 - params.lam) * np.eye(matrix.shape[0])
    return ShrunkenCovariance(matrix=out, lam=params.lam)


def sym_eigenvalues(m) -> NDArray[np.float64]:
    """Full real spectrum of a symmetric matrix, sorted descending.

    The input is symmetrized as (M + M^T)/2 before decomposition to absorb
    floating-point asymmetry; inputs that are not symmetric within a relative
    tolerance are rejected.
    """
    matrix = np.asarray(
        m.matrix if isinstance(m, (SampleCovariance, ShrunkenCovariance)) else m,
        dtype=float,
    )
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {matrix.shape}.")
    scale = max(1.0, float(np.abs(matrix).max()))
    if float(np.abs(matrix - matrix.T).max()) > _SYM_RTOL * scale:
        raise DomainError("matrix is not symmetric within tolerance.")
    sym = 0.5 * (matrix + matrix.T)
    return np.linalg.eigvalsh(sym)[::-1]
