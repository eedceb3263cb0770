"""Asymptotic calibration quantities for spectral covariance test statistics.

Everything here is a deterministic function of the aspect ratio gamma = p/(n-1)
and the shrinkage intensity lambda.  The central object is the linear spectral
statistic sum_i g(psi(l_i)) with psi(x) = lambda*x + (1-lambda) and
g(x) = psi(x) - log(psi(x)) - 1, whose null distribution is Gaussian with a
deterministic centering term of order p plus O(1) mean and variance.  This
module evaluates:

* the bulk spectral law of a white sample covariance matrix (support, density,
  expectations against it),
* the two real roots M < 0 < N of (1-lambda)m^2 + (1-2*lambda+lambda*gamma)m
  - lambda = 0, which locate the poles of the shrunken resolvent,
* the O(1) null mean and variance of the centered statistic,
* the per-eigenvalue centering integral and its generalization when the
  population covariance carries finitely many spiked eigenvalues,
* the resulting analytic power against a compound-symmetry alternative.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import CloseSpikeError, DomainError, NumericError, RegimeError

__all__ = [
    "DimensionSetup",
    "ShrinkageParams",
    "MpLaw",
    "MnRoots",
    "SpikedModel",
    "NullAsymptotics",
    "mp_support",
    "mp_density",
    "mp_expectation",
    "mn_roots",
    "null_mean",
    "null_variance",
    "centering_integral",
    "clrt_centering",
    "null_asymptotics",
    "spike_phi",
    "spike_constant",
    "cs_spike_constant",
    "spiked_centering",
    "analytic_power_cs",
]

_QUAD_TOL = 1e-12
_QUAD_MAX_ERR = 1e-10
_QUAD_LIMIT = 200


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DimensionSetup:
    """Sample size n and dimension p, with the adjusted ratio gamma_tilde = p/(n-1).

    The adjusted sample size n - 1 is the covariance divisor that makes the
    centered sample covariance unbiased; all asymptotic calibrations in this
    package are expressed in gamma_tilde rather than p/n.
    """

    n: int
    p: int

    def __post_init__(self) -> None:
        if int(self.n) != self.n or int(self.p) != self.p:
            raise DomainError("n and p must be integers.")
        if self.n < 2:
            raise DomainError(f"need n >= 2 observations, got n={self.n}.")
        if self.p < 1:
            raise DomainError(f"need p >= 1 variables, got p={self.p}.")

    @property
    def n_tilde(self) -> int:
        return self.n - 1

    @property
    def gamma_tilde(self) -> float:
        return self.p / (self.n - 1)

    def require_subcritical(self) -> None:
        """Raise unless gamma_tilde < 1 (required by the Gaussian calibrations)."""
        if not self.gamma_tilde < 1.0:
            raise RegimeError(
                f"asymptotic calibration requires p/(n-1) < 1, got "
                f"p={self.p}, n={self.n} (ratio {self.gamma_tilde:.4g}); "
                "only the raw statistic or an empirical critical value is "
                "available in this regime."
            )


@dataclass(frozen=True)
class ShrinkageParams:
    """Shrinkage intensity lambda in (0, 1] and the induced maps psi and g.

    lam = 1 leaves the sample covariance untouched (the unregularized
    statistic); lam = 0 is excluded because the statistic degenerates to zero.
    """

    lam: float

    def __post_init__(self) -> None:
        if not 0.0 < self.lam <= 1.0:
            raise DomainError(f"shrinkage intensity must be in (0, 1], got {self.lam}.")

    def psi(self, x):
        """Spectrum map of the shrunken covariance: psi(x) = lam*x + (1-lam)."""
        return self.lam * np.asarray(x, dtype=float) + (1.0 - self.lam)

    def g(self, x):
        """Per-eigenvalue statistic contribution g(x) = psi(x) - log psi(x) - 1."""
        psi = self.psi(x)
        return psi - np.log(psi) - 1.0


@dataclass(frozen=True)
class MpLaw:
    """Bulk spectral law of a white sample covariance matrix at aspect ratio gamma.

    Supported on [a, b] with a = (1-sqrt(gamma))^2, b = (1+sqrt(gamma))^2.
    """

    gamma: float

    def __post_init__(self) -> None:
        _check_gamma(self.gamma)

    @property
    def a(self) -> float:
        return (1.0 - math.sqrt(self.gamma)) ** 2

    @property
    def b(self) -> float:
        return (1.0 + math.sqrt(self.gamma)) ** 2

    def density(self, x):
        return mp_density(x, self.gamma)


@dataclass(frozen=True)
class MnRoots:
    """The two real roots of (1-lam)m^2 + (1-2lam+lam*gamma)m - lam = 0.

    m_root is the negative root (pinned inside the inverted bulk support
    interval), n_root the positive one.
    """

    m_root: float
    n_root: float


@dataclass(frozen=True)
class SpikedModel:
    """Population spectrum with K spiked eigenvalues and p - K unit eigenvalues.

    ``spikes`` lists (value, multiplicity) pairs; values must be positive and
    distinct from 1.  K is fixed and small relative to p.
    """

    spikes: tuple[tuple[float, int], ...]

    def __post_init__(self) -> None:
        normalized = []
        for a, m in self.spikes:
            a = float(a)
            m = int(m)
            if not (a > 0.0) or not math.isfinite(a):
                raise DomainError(f"spike eigenvalues must be positive, got {a}.")
            if a == 1.0:
                raise DomainError("a spike equal to 1 is not a spike; remove it.")
            if m < 1:
                raise DomainError(f"spike multiplicity must be >= 1, got {m}.")
            normalized.append((a, m))
        object.__setattr__(self, "spikes", tuple(normalized))

    @classmethod
    def single(cls, a: float, multiplicity: int = 1) -> "SpikedModel":
        return cls(((a, multiplicity),))

    @property
    def k_total(self) -> int:
        return sum(m for _, m in self.spikes)

    def close_spikes(self, gamma: float) -> list[float]:
        """Spike values within sqrt(gamma) of the bulk (not separated from it)."""
        thr = math.sqrt(gamma)
        return [a for a, _ in self.spikes if abs(a - 1.0) <= thr]


@dataclass(frozen=True)
class NullAsymptotics:
    """Gaussian null calibration: mean mu, variance v, per-eigenvalue centering."""

    mu: float
    v: float
    centering: float


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 < gamma < 1.0 or not math.isfinite(gamma):
        raise DomainError(f"aspect ratio must lie in (0, 1), got {gamma}.")
    return gamma


def _gamma_of(setup) -> float:
    """Accept a DimensionSetup or a bare aspect ratio."""
    if isinstance(setup, DimensionSetup):
        return _check_gamma(setup.gamma_tilde)
    return _check_gamma(setup)


def _quad(f: Callable[[float], float], a: float, b: float) -> float:
    val, err = integrate.quad(f, a, b, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=_QUAD_LIMIT)
    if err > _QUAD_MAX_ERR:
        raise NumericError(
            f"quadrature error estimate {err:.2e} exceeds {_QUAD_MAX_ERR:.0e}"
        )
    return val


# ---------------------------------------------------------------------------
# bulk law
# ---------------------------------------------------------------------------


def mp_support(gamma: float) -> tuple[float, float]:
    """Support edges ((1-sqrt(gamma))^2, (1+sqrt(gamma))^2) of the bulk law."""
    gamma = _check_gamma(gamma)
    s = math.sqrt(gamma)
    return (1.0 - s) ** 2, (1.0 + s) ** 2


def mp_density(x, gamma: float):
    """Bulk spectral density sqrt((b-x)(x-a)) / (2 pi gamma x), zero off [a, b]."""
    gamma = _check_gamma(gamma)
    a, b = mp_support(gamma)
    x = np.asarray(x, dtype=float)
    inside = (x >= a) & (x <= b)
    rad = np.where(inside, (b - x) * (x - a), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.sqrt(rad) / (2.0 * math.pi * gamma * x)
    dens = np.where(inside, dens, 0.0)
    return float(dens) if dens.ndim == 0 else dens


def mp_expectation(f: Callable[[float], float], gamma: float) -> float:
    """Integrate f against the bulk law by direct quadrature.

    The endpoint square-root singularities of the density are removed with the
    substitution x = a + (b - a) sin^2 t, after which the integrand is smooth.
    """
    gamma = _check_gamma(gamma)
    a, b = mp_support(gamma)
    w = b - a

    def integrand(t: float) -> float:
        st = math.sin(t)
        ct = math.cos(t)
        x = a + w * st * st
        # density * dx/dt = [w st ct / (2 pi gamma x)] * [2 w st ct]
        return f(x) * (w * st * ct) ** 2 / (math.pi * gamma * x)

    return _quad(integrand, 0.0, math.pi / 2.0)


# ---------------------------------------------------------------------------
# resolvent pole roots
# ---------------------------------------------------------------------------


def _mn_roots(lam: float, gamma: float) -> tuple[float, float]:
    b = 1.0 - 2.0 * lam + lam * gamma
    disc = b * b + 4.0 * lam * (1.0 - lam)
    s = math.sqrt(disc)
    denom = 2.0 * (1.0 - lam)
    m = (-b - s) / denom
    n = (-b + s) / denom
    sq = math.sqrt(gamma)
    lo, hi = -1.0 / (1.0 - sq), -1.0 / (1.0 + sq)
    # the negative root must sit strictly inside the inverted support interval
    if not (lo < m < hi):
        raise NumericError(
            f"negative root {m:.6g} escaped ({lo:.6g}, {hi:.6g}) at "
            f"lam={lam}, gamma={gamma}."
        )
    if not n > 0.0:
        raise NumericError(f"positive root came out {n:.6g} <= 0.")
    return m, n


def mn_roots(params: ShrinkageParams, gamma: float) -> MnRoots:
    """Real roots M < 0 < N of the shrunken-resolvent pole quadratic.

    Requires lam < 1; at lam = 1 the positive root diverges and callers use the
    closed-form limits instead.
    """
    gamma = _check_gamma(gamma)
    if params.lam >= 1.0:
        raise DomainError("roots are defined for lam in (0, 1); lam = 1 is a limit.")
    m, n = _mn_roots(params.lam, gamma)
    return MnRoots(m_root=m, n_root=n)


# ---------------------------------------------------------------------------
# null mean / variance / centering
# ---------------------------------------------------------------------------


def _null_mean_quadrature(lam: float, gamma: float) -> float:
    """Mean formula with the angular integral evaluated numerically.

    Valid for lam in (0, 1]; at lam = 1 the integral vanishes and the closed
    form -log(1-gamma)/2 is preferred.
    """
    first = -0.25 * math.log((1.0 + lam * gamma) ** 2 - 4.0 * lam * lam * gamma)
    two_sq = 2.0 * lam * math.sqrt(gamma)

    def integrand(t: float) -> float:
        return math.log(1.0 + lam * gamma - two_sq * math.cos(t))

    return first + _quad(integrand, 0.0, 2.0 * math.pi) / (4.0 * math.pi)


def null_mean(params: ShrinkageParams, gamma: float) -> float:
    """Asymptotic mean of the centered null statistic."""
    gamma = _check_gamma(gamma)
    if params.lam == 1.0:
        return -0.5 * math.log(1.0 - gamma)
    return _null_mean_quadrature(params.lam, gamma)


def null_variance(params: ShrinkageParams, gamma: float) -> float:
    """Asymptotic variance of the centered null statistic (strictly positive)."""
    gamma = _check_gamma(gamma)
    lam = params.lam
    if lam == 1.0:
        return -2.0 * gamma - 2.0 * math.log(1.0 - gamma)
    m, n = _mn_roots(lam, gamma)
    arg = (m - n) / (m * (1.0 + n))
    if arg <= 0.0:
        raise NumericError(f"log argument {arg:.6g} <= 0 in variance formula.")
    v = 2.0 * (
        -lam / m
        - lam * (1.0 + gamma - lam * gamma)
        + lam * gamma / (1.0 + n)
        - math.log(arg)
    )
    if v <= 0.0:
        raise NumericError(f"variance formula returned {v:.6g} <= 0.")
    return v


def _centering(lam: float, gamma: float) -> float:
    sq = math.sqrt(gamma)

    def integrand(t: float) -> float:
        c = math.cos(t)
        s = math.sin(t)
        return (
            math.log(1.0 + lam * gamma - 2.0 * lam * sq * c)
            / (1.0 + gamma - 2.0 * sq * c)
            * s
            * s
        )

    val = -2.0 / math.pi * _quad(integrand, 0.0, math.pi)
    if val < -1e-10:
        raise NumericError(f"centering integral came out negative ({val:.3e}).")
    return max(val, 0.0)


def centering_integral(params: ShrinkageParams, setup: DimensionSetup | float) -> float:
    """Expectation of g under the bulk law at gamma_tilde.

    This is the per-eigenvalue centering subtracted from the raw statistic
    before the Gaussian calibration applies.  The angular form of the integral
    is used; its integrand is smooth, so ordinary adaptive quadrature reaches
    absolute error below 1e-10.
    """
    gamma = _gamma_of(setup)
    return _centering(params.lam, gamma)


def clrt_centering(gamma: float) -> float:
    """Closed-form centering of the unregularized statistic: 1 - (g-1)/g log(1-g)."""
    gamma = _check_gamma(gamma)
    return 1.0 - (gamma - 1.0) / gamma * math.log(1.0 - gamma)


def null_asymptotics(params: ShrinkageParams, setup: DimensionSetup | float) -> NullAsymptotics:
    """Bundle (mu, v, centering) at the setup's adjusted aspect ratio."""
    gamma = _gamma_of(setup)
    return NullAsymptotics(
        mu=null_mean(params, gamma),
        v=null_variance(params, gamma),
        centering=_centering(params.lam, gamma),
    )


# ---------------------------------------------------------------------------
# spiked alternatives
# ---------------------------------------------------------------------------


def spike_phi(a: float, gamma: float) -> float:
    """Location a + gamma*a/(a-1) where a distant population spike lands."""
    a = float(a)
    if a == 1.0:
        raise DomainError("spike map is undefined at a = 1.")
    return a + gamma * a / (a - 1.0)


def _single_spike_constant(lam: float, gamma: float, a: float) -> float:
    """Per-spike centering constant for lam < 1.

    Raises CloseSpikeError when a log argument goes nonpositive, which happens
    exactly when the spike fails to separate from the bulk on the wrong side.
    """
    m, n = _mn_roots(lam, gamma)
    psi_phi = lam * spike_phi(a, gamma) + (1.0 - lam)
    ratio = (1.0 - a) / (1.0 + a * m)
    if psi_phi <= 0.0 or ratio <= 0.0:
        raise CloseSpikeError(
            f"centering constant is undefined for spike a={a} at "
            f"lam={lam}, gamma={gamma:.4g} (log of a nonpositive number)."
        )
    out = lam * a - lam - math.log(psi_phi)
    out -= (
        math.log(-m) / gamma
        + math.log(ratio)
        - (1.0 / (1.0 + a * m) - 1.0 / (1.0 - a))
    )
    block1 = (
        a * (m + 1.0) / (1.0 + a * m)
        - a * gamma * m * m / ((1.0 + a * m) * (m + 1.0))
        - 1.0
        + gamma * m * m / (m + 1.0) ** 2
    ) / (m - n)
    block2 = (
        a * gamma / (1.0 - a)
        + gamma * (2.0 * m * n + m + n) / ((m + 1.0) * (n + 1.0))
    ) / ((m + 1.0) * (n + 1.0))
    out += lam / (1.0 - lam) * (block1 - block2)
    return out


def _single_spike_constant_unregularized(gamma: float, a: float) -> float:
    """lam -> 1 limit of the per-spike constant, in closed form.

    Derived by substituting the limits M -> -1/(1-gamma), N -> +infinity and
    simplifying; four of the rational terms cancel pairwise.
    """
    phi = spike_phi(a, gamma)
    arg = (1.0 - a) * (1.0 - gamma) / (1.0 - gamma - a)
    if phi <= 0.0 or arg <= 0.0:
        raise CloseSpikeError(
            f"unregularized centering constant undefined for spike a={a}, "
            f"gamma={gamma:.4g}."
        )
    return a - math.log(phi) + math.log(1.0 - gamma) / gamma - math.log(arg)


def spike_constant(
    params: ShrinkageParams, gamma: float, model: SpikedModel
) -> float:
    """Multiplicity-weighted centering constant C(lam, gamma) of a spiked model."""
    gamma = _check_gamma(gamma)
    if model.k_total == 0:
        raise DomainError("spike constant needs at least one spike.")
    if params.lam == 1.0:
        total = sum(
            mult * _single_spike_constant_unregularized(gamma, a)
            for a, mult in model.spikes
        )
    else:
        total = sum(
            mult * _single_spike_constant(params.lam, gamma, a)
            for a, mult in model.spikes
        )
    return total / model.k_total


def cs_spike_constant(params: ShrinkageParams, gamma: float, beta: float) -> float:
    """Single-spike constant at a = 1 + beta, written in its reduced form.

    Algebraically identical to ``spike_constant`` with one spike 1 + beta (the
    product and sum of the pole roots collapse several terms); kept as an
    independent evaluation path for cross-checking.
    """
    gamma = _check_gamma(gamma)
    beta = float(beta)
    if beta <= 0.0:
        raise DomainError(f"compound-symmetry offset must be positive, got {beta}.")
    if params.lam == 1.0:
        return _single_spike_constant_unregularized(gamma, 1.0 + beta)
    lam = params.lam
    m, n = _mn_roots(lam, gamma)
    a = 1.0 + beta
    denom = 1.0 + a * m
    if denom >= 0.0:
        raise CloseSpikeError(
            f"reduced spike constant undefined for beta={beta} at "
            f"lam={lam}, gamma={gamma:.4g}."
        )
    out = lam * beta - math.log(lam * spike_phi(a, gamma) + 1.0 - lam)
    out += (1.0 / lam + math.log(-1.0 / m)) / gamma
    out += 1.0 / denom - math.log(-beta / denom)
    out += (
        lam
        / ((1.0 - lam) * (m - n))
        * (
            a * (m + 1.0) / denom
            - gamma * a * m * m / (denom * (m + 1.0))
            - 1.0
            + gamma * m * m / (m + 1.0) ** 2
        )
    )
    return out


def spiked_centering(
    params: ShrinkageParams,
    setup: DimensionSetup,
    model: SpikedModel,
    *,
    allow_close_spike: bool = False,
) -> float:
    """Total centering p * E[g] under a spiked population spectrum.

    Computed as (p - K) * centering_integral + K * C(lam, gamma_tilde); the
    O(1/n^2) remainder of the underlying expansion is dropped.  With an empty
    spike list this reduces exactly to p times the null centering.
    """
    gamma = _gamma_of(setup)
    base = _centering(params.lam, gamma)
    k = model.k_total
    if k == 0:
        return setup.p * base
    close = model.close_spikes(gamma)
    if close:
        if not allow_close_spike:
            raise CloseSpikeError(
                f"spikes {close} are within sqrt(gamma_tilde) = "
                f"{math.sqrt(gamma):.4g} of the bulk; the distant-spike "
                "centering does not cover them.  Pass allow_close_spike=True "
                "to extrapolate anyway (no accuracy guarantee)."
            )
        warnings.warn(
            "extrapolating the distant-spike centering to close spikes "
            f"{close}; no correctness claim is made on this range.",
            RuntimeWarning,
            stacklevel=2,
        )
    c = spike_constant(params, gamma, model)
    return (setup.p - k) * base + k * c


def analytic_power_cs(
    params: ShrinkageParams,
    setup: DimensionSetup,
    beta: float,
    eta: float = 0.05,
    *,
    allow_close_spike: bool = False,
) -> float:
    """Asymptotic power of the upper-tail level-eta test against I + (beta/p)J.

    The alternative shifts the centering by delta = C(lam, gamma_tilde)
    - centering_integral while leaving the Gaussian variance unchanged, so the
    power is 1 - Phi(z_{1-eta} - delta / sqrt(v)).
    """
    gamma = _gamma_of(setup)
    if not 0.0 < eta < 1.0:
        raise DomainError(f"level must be in (0, 1), got {eta}.")
    beta = float(beta)
    if beta <= 0.0:
        raise DomainError(f"compound-symmetry offset must be positive, got {beta}.")
    if beta <= math.sqrt(gamma):
        if not allow_close_spike:
            raise CloseSpikeError(
                f"beta={beta} is a close spike at gamma_tilde={gamma:.4g} "
                f"(needs beta > {math.sqrt(gamma):.4g}); pass "
                "allow_close_spike=True to extrapolate (no accuracy guarantee)."
            )
        warnings.warn(
            f"extrapolating analytic power to close spike beta={beta}; "
            "no correctness claim is made on this range.",
            RuntimeWarning,
            stacklevel=2,
        )
    model = SpikedModel.single(1.0 + beta)
    delta = spike_constant(params, gamma, model) - _centering(params.lam, gamma)
    v = null_variance(params, gamma)
    z = special.ndtri(1.0 - eta) - delta / math.sqrt(v)
    return float(1.0 - special.ndtr(z))
