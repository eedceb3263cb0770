"""Hypothesis tests of H0: the population covariance is the identity.

Four tests are provided, each returning a standardized upper-tail z-score:

* ``rlrt_test``  -- shrinkage-regularized likelihood ratio statistic,
  calibrated by its Gaussian limit (any p < n - 1, shrinkage in (0, 1));
* ``clrt_test``  -- the unregularized statistic on the raw sample covariance
  (requires p < n - 1 so all eigenvalues are positive);
* ``lw_test``    -- the quadratic-loss statistic of Ledoit and Wolf;
* ``chen_test``  -- the U-statistic test of Chen, Zhang and Zhong, with both a
  reduced O(n^2 p) evaluation and a literal distinct-index reference.

All tests consume the centered, unbiased sample covariance (divisor n - 1);
the regularized/unregularized statistics are calibrated at the adjusted ratio
p/(n-1), while the Ledoit-Wolf and Chen standardizations keep their original
sample-size n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .covariance import as_data_matrix, sample_covariance, sym_eigenvalues
from .errors import DomainError, SingularCovarianceError
from .rmt import (
    DimensionSetup,
    ShrinkageParams,
    clrt_centering,
    null_asymptotics,
)

__all__ = [
    "TestResult",
    "rlrt_statistic",
    "rlrt_raw_from_eigenvalues",
    "lw_raw_from_eigenvalues",
    "chen_raw_from_gram",
    "chen_statistic_bruteforce",
    "rlrt_test",
    "clrt_test",
    "lw_test",
    "chen_test",
    "empirical_critical_value",
]

_SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class TestResult:
    """Outcome of one test: raw statistic, z-score, p-value, decision."""

    raw: float
    z: float
    p_value: float
    reject: bool
    method: str
    setup: DimensionSetup
    eta: float


def _finish(raw: float, z: float, method: str, setup: DimensionSetup, eta: float) -> TestResult:
    if not 0.0 < eta < 1.0:
        raise DomainError(f"level must be in (0, 1), got {eta}.")
    p_value = float(special.ndtr(-z))
    return TestResult(
        raw=float(raw),
        z=float(z),
        p_value=p_value,
        reject=bool(p_value < eta),
        method=method,
        setup=setup,
        eta=eta,
    )


# ---------------------------------------------------------------------------
# statistic kernels (vectorized over leading axes)
# ---------------------------------------------------------------------------


def rlrt_raw_from_eigenvalues(eigenvalues, lam: float):
    """sum_i [psi(l_i) - log psi(l_i) - 1] over the trailing axis.

    Eigenvalues may be stacked; raises for spectra where the shrunken
    eigenvalues are not strictly positive (only possible when lam = 1 meets a
    rank-deficient covariance, or the input was not positive semidefinite).
    """
    l = np.asarray(eigenvalues, dtype=float)
    if lam == 1.0:
        top = l.max(axis=-1, keepdims=True)
        if np.any(l <= np.maximum(top, 1.0) * _SINGULAR_RTOL):
            raise SingularCovarianceError(
                "statistic undefined: singular sample covariance "
                "(a log of a nonpositive eigenvalue; this is the p >= n - 1 "
                "failure mode of the unregularized statistic)."
            )
    psi = lam * l + (1.0 - lam)
    if np.any(psi <= 0.0):
        raise DomainError("shrunken spectrum is not positive; input covariance "
                          "is not positive semidefinite.")
    return (psi - np.log(psi) - 1.0).sum(axis=-1)


def lw_raw_from_eigenvalues(eigenvalues, n: int):
    """Quadratic-loss statistic from the spectrum of S:
    tr((S-I)^2)/p - (p/n)(tr(S)/p)^2 + p/n."""
    l = np.asarray(eigenvalues, dtype=float)
    p = l.shape[-1]
    tr_sq = ((l - 1.0) ** 2).sum(axis=-1)
    tr = l.sum(axis=-1)
    return tr_sq / p - (p / n) * (tr / p) ** 2 + p / n


def chen_raw_from_gram(gram, p: int):
    """Chen-Zhang-Zhong statistic from the Gram matrix of the data rows.

    The distinct-index U-statistic sums are expanded into traces of the
    zero-diagonal Gram matrix, giving an O(n^2) evaluation per replication.
    Accepts a stacked (..., n, n) array.
    """
    g = np.asarray(gram, dtype=float)
    n = g.shape[-1]
    if n < 4:
        raise DomainError(f"the distinct-index sums need n >= 4, got n={n}.")
    diag = np.diagonal(g, axis1=-2, axis2=-1)
    a = g - diag[..., None] * np.eye(n)
    row = a.sum(axis=-1)
    total = row.sum(axis=-1)
    fro2 = (a * a).sum(axis=(-2, -1))
    row2 = (row * row).sum(axis=-1)
    p2 = n * (n - 1)
    p3 = p2 * (n - 2)
    p4 = p3 * (n - 3)
    v1 = diag.sum(axis=-1) / n - total / p2
    s3 = row2 - fro2
    s4 = total * total - 4.0 * row2 + 2.0 * fro2
    v2 = fro2 / p2 - 2.0 * s3 / p3 + s4 / p4
    return v2 / p - 2.0 * v1 / p + 1.0


def chen_statistic_bruteforce(rows) -> float:
    """Literal distinct-index evaluation of the Chen-Zhang-Zhong statistic.

    Quadruple loops over all index tuples with pairwise-distinct entries;
    O(n^4 p), intended only as a reference for small inputs.
    """
    x = np.asarray(rows, dtype=float)
    n, p = x.shape
    if n < 4:
        raise DomainError(f"the distinct-index sums need n >= 4, got n={n}.")
    p2 = n * (n - 1)
    p3 = p2 * (n - 2)
    p4 = p3 * (n - 3)

    v1 = sum(float(x[i] @ x[i]) for i in range(n)) / n
    pair = 0.0
    pair_sq = 0.0
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            dot = float(x[i] @ x[j])
            pair += dot
            pair_sq += dot * dot
    v1 -= pair / p2

    triple = 0.0
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            for k in range(n):
                if k == i or k == j:
                    continue
                triple += float(x[i] @ x[j]) * float(x[j] @ x[k])

    quad = 0.0
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            for k in range(n):
                if k == i or k == j:
                    continue
                for l in range(n):
                    if l == i or l == j or l == k:
                        continue
                    quad += float(x[i] @ x[j]) * float(x[k] @ x[l])

    v2 = pair_sq / p2 - 2.0 * triple / p3 + quad / p4
    return v2 / p - 2.0 * v1 / p + 1.0


# ---------------------------------------------------------------------------
# tests
# ---------------------------------------------------------------------------


def rlrt_statistic(s, params: ShrinkageParams) -> float:
    """Raw regularized statistic sum_i g(psi(l_i)) of a sample covariance."""
    eigenvalues = sym_eigenvalues(s)
    return float(rlrt_raw_from_eigenvalues(eigenvalues, params.lam))


def rlrt_test(data, params: ShrinkageParams, eta: float = 0.05) -> TestResult:
    """Regularized likelihood ratio test at shrinkage lam in (0, 1)."""
    if params.lam >= 1.0:
        raise DomainError("rlrt_test requires lam < 1; use clrt_test for lam = 1.")
    dm = as_data_matrix(data)
    setup = DimensionSetup(n=dm.n, p=dm.p)
    setup.require_subcritical()
    na = null_asymptotics(params, setup)
    raw = rlrt_statistic(sample_covariance(dm), params)
    z = (raw - setup.p * na.centering - na.mu) / math.sqrt(na.v)
    return _finish(raw, z, f"rlrt({params.lam:g})", setup, eta)


def clrt_test(data, eta: float = 0.05) -> TestResult:
    """Likelihood ratio test on the raw sample covariance (p < n - 1 only)."""
    dm = as_data_matrix(data)
    setup = DimensionSetup(n=dm.n, p=dm.p)
    setup.require_subcritical()
    gt = setup.gamma_tilde
    raw = rlrt_statistic(sample_covariance(dm), ShrinkageParams(1.0))
    mu = -0.5 * math.log(1.0 - gt)
    v = -2.0 * math.log(1.0 - gt) - 2.0 * gt
    z = (raw - setup.p * clrt_centering(gt) - mu) / math.sqrt(v)
    return _finish(raw, z, "clrt", setup, eta)


def lw_test(data, eta: float = 0.05) -> TestResult:
    """Quadratic-loss test; valid for any aspect ratio."""
    dm = as_data_matrix(data)
    setup = DimensionSetup(n=dm.n, p=dm.p)
    eigenvalues = sym_eigenvalues(sample_covariance(dm))
    raw = float(lw_raw_from_eigenvalues(eigenvalues, dm.n))
    z = (dm.n * raw - dm.p - 1.0) / 2.0
    return _finish(raw, z, "lw", setup, eta)


def chen_test(data, eta: float = 0.05) -> TestResult:
    """Distinct-index U-statistic test; needs n >= 4, any aspect ratio."""
    dm = as_data_matrix(data)
    if dm.n < 4:
        raise DomainError(f"chen_test needs n >= 4 observations, got {dm.n}.")
    setup = DimensionSetup(n=dm.n, p=dm.p)
    centered = dm.values - dm.values.mean(axis=0, keepdims=True)
    raw = float(chen_raw_from_gram(centered @ centered.T, dm.p))
    z = dm.n * raw / 2.0
    return _finish(raw, z, "chen", setup, eta)


def empirical_critical_value(
    method,
    setup: DimensionSetup,
    eta: float = 0.05,
    reps: int = 100_000,
    seed: int = 0,
    *,
    lam: float | None = None,
    workers: int = 1,
) -> float:
    """Empirical (1 - eta) quantile of the z statistic under the null.

    ``method`` is one of "rlrt" (with lam), "clrt", "lw", "chen", or a
    montecarlo.Method.  The quantile is the ceil((1-eta)*reps)-th order
    statistic of ``reps`` simulated null z-scores; the simulation streams are
    a pure function of ``seed``, so repeated calls are bit-identical.
    """
    from . import montecarlo as mc

    if reps < 1000:
        raise DomainError(f"need at least 1000 replications, got {reps}.")
    if not 0.0 < eta < 1.0:
        raise DomainError(f"level must be in (0, 1), got {eta}.")
    m = method if isinstance(method, mc.Method) else mc.Method(kind=method, lam=lam)
    if m.kind == "lw_corr":
        raise DomainError("the corrected variant is itself defined by this quantile.")
    sample = mc.simulate_statistics(
        m, mc.Scenario.null(), setup.n, setup.p, reps, seed,
        eta=eta, workers=workers, key_prefix=(0, 1),
    )
    order = np.sort(sample.z)
    k = math.ceil((1.0 - eta) * reps)
    return float(order[k - 1])
