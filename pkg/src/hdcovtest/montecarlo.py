"""Scenario generators and the size/power simulation engine.

Replication r of simulation cell c draws its data from an independent
counter-based random stream keyed by (master_seed, c, r), so results are a
pure function of the seed and are identical for any number of worker
processes or any execution order.  Rejection counts are integers and raw
statistics are stored by replication index, which makes the aggregation
exact (no float-order effects).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .covariance import DataMatrix
from .errors import DomainError
from .rmt import DimensionSetup, ShrinkageParams, clrt_centering, null_asymptotics
from .testing import (
    chen_raw_from_gram,
    lw_raw_from_eigenvalues,
    rlrt_raw_from_eigenvalues,
)

__all__ = [
    "Scenario",
    "Method",
    "SimulationGrid",
    "CellResult",
    "StatSample",
    "materialize_sigma",
    "sample_mvn",
    "simulate_statistics",
    "run_grid",
    "empirical_power_curve",
    "empirical_density",
]

_CHUNK = 512   # replications per work unit; fixed so worker count cannot
_BATCH = 128   # change how replications are grouped numerically


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """A population covariance family, materialized at any dimension p.

    Kinds: "null" (identity), "a1" (some variances raised to 2), "a2" (one
    diverging spike 1 + 0.2 p), "cs" (compound symmetry I + rho J), "cs_beta"
    (compound symmetry I + (beta/p) J, fixed spike 1 + beta), "custom".
    """

    kind: str
    rho: float | None = None
    beta: float | None = None
    sigma: np.ndarray | None = None
    a1_twos_rule: str = "max"

    _KINDS = ("null", "a1", "a2", "cs", "cs_beta", "custom")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise DomainError(f"unknown scenario kind {self.kind!r}.")

    @classmethod
    def null(cls) -> "Scenario":
        return cls(kind="null")

    @classmethod
    def a1(cls, twos_rule: str = "max") -> "Scenario":
        return cls(kind="a1", a1_twos_rule=twos_rule)

    @classmethod
    def a2(cls) -> "Scenario":
        return cls(kind="a2")

    @classmethod
    def a3(cls) -> "Scenario":
        return cls(kind="cs", rho=0.2)

    @classmethod
    def a4(cls) -> "Scenario":
        return cls(kind="cs", rho=0.1)

    @classmethod
    def cs(cls, rho: float) -> "Scenario":
        return cls(kind="cs", rho=float(rho))

    @classmethod
    def cs_beta(cls, beta: float) -> "Scenario":
        return cls(kind="cs_beta", beta=float(beta))

    @classmethod
    def custom(cls, sigma) -> "Scenario":
        return cls(kind="custom", sigma=np.asarray(sigma, dtype=float))

    @classmethod
    def named(cls, name: str, *, a1_twos_rule: str = "max") -> "Scenario":
        """Resolve a scenario by its CLI name (null, a1, a2, a3, a4, cs:RHO)."""
        name = name.lower()
        if name == "null":
            return cls.null()
        if name == "a1":
            return cls.a1(a1_twos_rule)
        if name == "a2":
            return cls.a2()
        if name == "a3":
            return cls.a3()
        if name == "a4":
            return cls.a4()
        if name.startswith("cs:"):
            return cls.cs(float(name[3:]))
        raise DomainError(f"unknown scenario {name!r}.")

    @property
    def label(self) -> str:
        if self.kind == "cs":
            if self.rho == 0.2:
                return "a3"
            if self.rho == 0.1:
                return "a4"
            return f"cs({self.rho:g})"
        if self.kind == "cs_beta":
            return f"cs_beta({self.beta:g})"
        return self.kind


def _a1_twos_count(rule: str, p: int) -> int:
    if rule == "max":
        return max(1, math.floor(0.2 * p))
    if rule == "min":
        return min(1, math.floor(0.2 * p))
    if rule.startswith("fixed:"):
        k = int(rule.split(":", 1)[1])
        if not 0 <= k <= p:
            raise DomainError(f"fixed twos count {k} outside [0, {p}].")
        return k
    raise DomainError(f"unknown twos rule {rule!r} (expected max, min, or fixed:k).")


def materialize_sigma(scenario: Scenario, p: int) -> np.ndarray:
    """Build the p x p covariance matrix for a scenario."""
    if p < 1:
        raise DomainError(f"dimension must be >= 1, got {p}.")
    if scenario.kind == "null":
        return np.eye(p)
    if scenario.kind == "a1":
        d = np.ones(p)
        d[: _a1_twos_count(scenario.a1_twos_rule, p)] = 2.0
        return np.diag(d)
    if scenario.kind == "a2":
        d = np.ones(p)
        d[0] = 1.0 + 0.2 * p
        return np.diag(d)
    if scenario.kind == "cs":
        if scenario.rho is None or scenario.rho < 0.0:
            raise DomainError(f"compound symmetry needs rho >= 0, got {scenario.rho}.")
        return np.eye(p) + scenario.rho * np.ones((p, p))
    if scenario.kind == "cs_beta":
        if scenario.beta is None or scenario.beta < 0.0:
            raise DomainError(f"cs_beta needs beta >= 0, got {scenario.beta}.")
        return np.eye(p) + (scenario.beta / p) * np.ones((p, p))
    sigma = np.asarray(scenario.sigma, dtype=float)
    if sigma.shape != (p, p):
        raise DomainError(f"custom covariance has shape {sigma.shape}, expected {(p, p)}.")
    return sigma


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _sigma_factor(sigma: np.ndarray):
    """Return ("diag", sqrt of diagonal) or ("dense", symmetric square root)."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DomainError(f"covariance must be square, got shape {sigma.shape}.")
    off = sigma - np.diag(np.diagonal(sigma))
    if not np.any(off):
        d = np.diagonal(sigma)
        if np.any(d < 0.0):
            raise DomainError("covariance has negative diagonal entries.")
        return "diag", np.sqrt(d)
    w, v = np.linalg.eigh(0.5 * (sigma + sigma.T))
    scale = max(1.0, float(w.max(initial=0.0)))
    if w.min() < -1e-10 * scale:
        raise DomainError(
            f"covariance is not positive semidefinite (min eigenvalue {w.min():.3e})."
        )
    half = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return "dense", half


def _rep_rng(master_seed: int, key: tuple[int, ...]) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


def sample_mvn(n: int, sigma, stream: np.random.Generator) -> DataMatrix:
    """Draw n rows from a centered Gaussian with the given covariance.

    Uses the symmetric spectral square root, so semidefinite (including
    singular) covariances are accepted.
    """
    if n < 2:
        raise DomainError(f"need n >= 2 rows, got {n}.")
    kind, factor = _sigma_factor(np.asarray(sigma, dtype=float))
    p = factor.shape[-1]
    z = stream.standard_normal((n, p))
    values = z * factor if kind == "diag" else z @ factor
    return DataMatrix(values)


# ---------------------------------------------------------------------------
# methods and their calibration plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Method:
    """A test to run in the simulation grid: kind plus shrinkage if relevant.

    Kinds: "rlrt" (needs lam), "clrt", "lw", "lw_corr" (empirically
    recalibrated cutoff), "chen".
    """

    kind: str
    lam: float | None = None

    _KINDS = ("rlrt", "clrt", "lw", "lw_corr", "chen")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise DomainError(f"unknown method {self.kind!r}.")
        if self.kind == "rlrt":
            if self.lam is None:
                raise DomainError("rlrt needs a shrinkage intensity.")
            ShrinkageParams(self.lam)  # validates the range
        elif self.lam is not None:
            raise DomainError(f"method {self.kind!r} takes no shrinkage intensity.")

    @classmethod
    def parse(cls, text: str) -> "Method":
        """Parse "rlrt(0.5)", "rlrt:0.5", "clrt", "lw", "lw_corr", "chen"."""
        text = text.strip().lower().replace("lw-corr", "lw_corr")
        if text.startswith("rlrt") and len(text) > 4:
            inner = text[4:].strip("():").strip()
            return cls(kind="rlrt", lam=float(inner))
        return cls(kind=text)

    @property
    def label(self) -> str:
        return f"rlrt({self.lam:g})" if self.kind == "rlrt" else self.kind


@dataclass(frozen=True)
class _Plan:
    """Everything a worker needs to evaluate one method on simulated spectra."""

    kind: str
    lam: float
    reps: int
    zcut: float
    cent: float = 0.0
    mu: float = 0.0
    sd: float = 1.0

    @property
    def needs_spectrum(self) -> bool:
        return self.kind != "chen"


def _build_plan(method: Method, n: int, p: int, eta: float, reps: int) -> _Plan:
    zcut = float(special.ndtri(1.0 - eta))
    if method.kind in ("lw", "lw_corr"):
        return _Plan(kind="lw", lam=1.0, reps=reps, zcut=zcut)
    if method.kind == "chen":
        if n < 4:
            raise DomainError(f"chen needs n >= 4, got n={n}.")
        return _Plan(kind="chen", lam=1.0, reps=reps, zcut=zcut)
    setup = DimensionSetup(n=n, p=p)
    setup.require_subcritical()
    if method.kind == "clrt":
        gt = setup.gamma_tilde
        mu = -0.5 * math.log(1.0 - gt)
        v = -2.0 * math.log(1.0 - gt) - 2.0 * gt
        return _Plan(kind="clrt", lam=1.0, reps=reps, zcut=zcut,
                     cent=p * clrt_centering(gt), mu=mu, sd=math.sqrt(v))
    na = null_asymptotics(ShrinkageParams(method.lam), setup)
    return _Plan(kind="rlrt", lam=method.lam, reps=reps, zcut=zcut,
                 cent=p * na.centering, mu=na.mu, sd=math.sqrt(na.v))


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------


def _plan_stats(plan: _Plan, eigenvalues, x, n: int, p: int):
    """(raw, z) arrays for the replications covered by this plan in a batch."""
    if plan.kind in ("rlrt", "clrt"):
        raw = rlrt_raw_from_eigenvalues(eigenvalues, plan.lam)
        z = (raw - plan.cent - plan.mu) / plan.sd
    elif plan.kind == "lw":
        raw = lw_raw_from_eigenvalues(eigenvalues, n)
        z = (n * raw - p - 1.0) / 2.0
    else:
        gram = np.matmul(x, x.transpose(0, 2, 1))
        raw = chen_raw_from_gram(gram, p)
        z = n * raw / 2.0
    return raw, z


def _eval_chunk(
    factor_kind: str,
    factor: np.ndarray,
    n: int,
    p: int,
    plans: tuple[_Plan, ...],
    master_seed: int,
    key_prefix: tuple[int, ...],
    start: int,
    count: int,
    collect: bool,
):
    """Evaluate replications [start, start + count) of one cell.

    Returns per plan: (rejection count, raw array or None, z array or None),
    arrays covering the replications of this chunk that the plan owns.
    """
    rejections = [0] * len(plans)
    raws = [[] for _ in plans] if collect else None
    zs = [[] for _ in plans] if collect else None
    need_spectrum = any(pl.needs_spectrum for pl in plans)
    pos = start
    end = start + count
    while pos < end:
        b = min(_BATCH, end - pos)
        active = [min(max(pl.reps - pos, 0), b) for pl in plans]
        if max(active) == 0:
            break
        b = max(active)
        z_data = np.empty((b, n, p))
        for i in range(b):
            rng = _rep_rng(master_seed, key_prefix + (pos + i,))
            z_data[i] = rng.standard_normal((n, p))
        x = z_data * factor if factor_kind == "diag" else z_data @ factor
        x -= x.mean(axis=1, keepdims=True)
        eigenvalues = None
        if need_spectrum:
            s = np.matmul(x.transpose(0, 2, 1), x) / (n - 1)
            eigenvalues = np.linalg.eigvalsh(s)
        for idx, (plan, m) in enumerate(zip(plans, active)):
            if m == 0:
                continue
            ev = eigenvalues[:m] if plan.needs_spectrum else None
            raw, z = _plan_stats(plan, ev, x[:m], n, p)
            rejections[idx] += int((z > plan.zcut).sum())
            if collect:
                raws[idx].append(raw)
                zs[idx].append(z)
        pos += b
    out = []
    for idx in range(len(plans)):
        if collect:
            raw = np.concatenate(raws[idx]) if raws[idx] else np.empty(0)
            z = np.concatenate(zs[idx]) if zs[idx] else np.empty(0)
            out.append((rejections[idx], raw, z))
        else:
            out.append((rejections[idx], None, None))
    return out


def _run_cell(
    sigma: np.ndarray,
    n: int,
    p: int,
    plans: tuple[_Plan, ...],
    master_seed: int,
    key_prefix: tuple[int, ...],
    workers: int = 1,
    collect: bool = False,
):
    """Run all plans of one cell; deterministic in (master_seed, key_prefix)."""
    factor_kind, factor = _sigma_factor(sigma)
    reps_max = max(pl.reps for pl in plans)
    chunks = [(s, min(_CHUNK, reps_max - s)) for s in range(0, reps_max, _CHUNK)]
    args = [
        (factor_kind, factor, n, p, plans, master_seed, key_prefix, s, c, collect)
        for s, c in chunks
    ]
    if workers <= 1 or len(chunks) == 1:
        partials = [_eval_chunk(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_eval_chunk_star, args))
    rejections = [0] * len(plans)
    raws = [[] for _ in plans]
    zs = [[] for _ in plans]
    for part in partials:  # chunk order == replication order
        for idx, (rej, raw, z) in enumerate(part):
            rejections[idx] += rej
            if collect:
                raws[idx].append(raw)
                zs[idx].append(z)
    if collect:
        return rejections, [np.concatenate(r) for r in raws], [np.concatenate(z) for z in zs]
    return rejections, None, None


def _eval_chunk_star(args):
    return _eval_chunk(*args)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StatSample:
    """Raw and standardized statistics of one method over many replications."""

    raw: np.ndarray
    z: np.ndarray


def simulate_statistics(
    method: Method,
    scenario: Scenario,
    n: int,
    p: int,
    reps: int,
    seed: int,
    *,
    eta: float = 0.05,
    workers: int = 1,
    key_prefix: tuple[int, ...] = (0, 0),
) -> StatSample:
    """Simulate ``reps`` draws of a method's (raw, z) under a scenario."""
    if reps < 1:
        raise DomainError(f"need reps >= 1, got {reps}.")
    plan = _build_plan(method, n, p, eta, reps)
    sigma = materialize_sigma(scenario, p)
    _, raws, zs = _run_cell(
        sigma, n, p, (plan,), seed, key_prefix, workers=workers, collect=True
    )
    return StatSample(raw=raws[0], z=zs[0])


@dataclass(frozen=True)
class SimulationGrid:
    """A size/power experiment: scenarios x (n, gamma) x methods.

    p is derived per cell as round(gamma * n).  ``chen_reps`` caps the
    replication count of the Chen method (its cost per replication is much
    higher); None means use ``reps``.
    """

    scenarios: tuple[Scenario, ...]
    sample_sizes: tuple[int, ...]
    gammas: tuple[float, ...]
    methods: tuple[Method, ...]
    reps: int
    master_seed: int = 0
    eta: float = 0.05
    chen_reps: int | None = None

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise DomainError(f"need reps >= 1, got {self.reps}.")
        if self.chen_reps is not None and self.chen_reps < 1:
            raise DomainError(f"need chen_reps >= 1, got {self.chen_reps}.")
        if not 0.0 < self.eta < 1.0:
            raise DomainError(f"level must be in (0, 1), got {self.eta}.")
        for n in self.sample_sizes:
            if n < 2:
                raise DomainError(f"sample sizes must be >= 2, got {n}.")
        for g in self.gammas:
            if g <= 0.0:
                raise DomainError(f"aspect ratios must be positive, got {g}.")

    def cells(self):
        """Enumerate (cell_index, scenario, n, p, gamma)."""
        idx = 0
        for scenario in self.scenarios:
            for n in self.sample_sizes:
                for gamma in self.gammas:
                    p = max(1, round(gamma * n))
                    yield idx, scenario, n, p, gamma
                    idx += 1


@dataclass(frozen=True)
class CellResult:
    """Rejection rate of one method in one grid cell."""

    scenario: str
    n: int
    p: int
    gamma: float
    method: str
    lam: float | None
    reps: int
    rejections: int
    rate: float
    mc_se: float
    error: str | None = None
    elapsed: float = 0.0


def _method_reps(method: Method, grid: SimulationGrid) -> int:
    if method.kind == "chen" and grid.chen_reps is not None:
        return min(grid.chen_reps, grid.reps)
    return grid.reps


def run_grid(grid: SimulationGrid, workers: int = 1) -> list[CellResult]:
    """Rejection rate of every method in every cell of the grid.

    Methods within a cell share replication data (stream key (seed, cell, 0,
    rep)); the recalibrated cutoff of "lw_corr" is estimated from an
    independent null pass keyed (seed, cell, 1, rep).  Per-method calibration
    failures (e.g. the likelihood-ratio calibrations at p >= n - 1) are
    recorded in the cell's ``error`` field rather than raised.
    """
    results: list[CellResult] = []
    for cell_index, scenario, n, p, gamma in grid.cells():
        sigma = materialize_sigma(scenario, p)
        plans: list[_Plan] = []
        plan_methods: list[Method] = []
        t0 = time.perf_counter()
        for method in grid.methods:
            reps = _method_reps(method, grid)
            try:
                plan = _build_plan(method, n, p, grid.eta, reps)
                if method.kind == "lw_corr":
                    cut = _lw_corr_cutoff(grid, cell_index, n, p, reps, workers)
                    plan = replace(plan, zcut=cut)
            except (DomainError, ValueError) as exc:
                results.append(CellResult(
                    scenario=scenario.label, n=n, p=p, gamma=gamma,
                    method=method.label, lam=method.lam, reps=reps,
                    rejections=0, rate=float("nan"), mc_se=float("nan"),
                    error=str(exc),
                ))
                continue
            plans.append(plan)
            plan_methods.append(method)
        if not plans:
            continue
        rejections, _, _ = _run_cell(
            sigma, n, p, tuple(plans), grid.master_seed,
            (cell_index, 0), workers=workers,
        )
        elapsed = time.perf_counter() - t0
        for method, plan, rej in zip(plan_methods, plans, rejections):
            rate = rej / plan.reps
            results.append(CellResult(
                scenario=scenario.label, n=n, p=p, gamma=gamma,
                method=method.label, lam=method.lam, reps=plan.reps,
                rejections=rej, rate=rate,
                mc_se=math.sqrt(rate * (1.0 - rate) / plan.reps),
                elapsed=elapsed,
            ))
    return results


def _lw_corr_cutoff(
    grid: SimulationGrid, cell_index: int, n: int, p: int, reps: int, workers: int
) -> float:
    """(1 - eta) null quantile of the lw z statistic for one grid cell."""
    plan = _build_plan(Method("lw"), n, p, grid.eta, reps)
    _, _, zs = _run_cell(
        np.eye(p), n, p, (plan,), grid.master_seed,
        (cell_index, 1), workers=workers, collect=True,
    )
    order = np.sort(zs[0])
    k = math.ceil((1.0 - grid.eta) * reps)
    return float(order[k - 1])


def empirical_power_curve(
    beta_grid,
    setup: DimensionSetup,
    lam: float,
    reps: int,
    seed: int,
    *,
    eta: float = 0.05,
    workers: int = 1,
) -> list[tuple[float, float]]:
    """Rejection rate of the regularized test against I + (beta/p) J, per beta.

    beta = 0 reproduces the null, so the rate recovers the empirical size.
    Curve point i uses stream keys (seed, i, 0, rep).
    """
    method = Method("rlrt", lam) if lam < 1.0 else Method("clrt")
    out: list[tuple[float, float]] = []
    for i, beta in enumerate(beta_grid):
        beta = float(beta)
        scenario = Scenario.null() if beta == 0.0 else Scenario.cs_beta(beta)
        plan = _build_plan(method, setup.n, setup.p, eta, reps)
        sigma = materialize_sigma(scenario, setup.p)
        rejections, _, _ = _run_cell(
            sigma, setup.n, setup.p, (plan,), seed, (i, 0), workers=workers,
        )
        out.append((beta, rejections[0] / reps))
    return out


def empirical_density(
    method: Method,
    scenario: Scenario,
    n: int,
    p: int,
    lam: float | None,
    reps: int,
    seed: int,
    bins: int = 50,
    *,
    eta: float = 0.05,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized histogram (density, edges) of a method's raw statistic."""
    if bins < 1:
        raise DomainError(f"need at least one bin, got {bins}.")
    if method.kind == "rlrt" and method.lam is None:
        method = Method("rlrt", lam)
    sample = simulate_statistics(
        method, scenario, n, p, reps, seed, eta=eta, workers=workers,
    )
    density, edges = np.histogram(sample.raw, bins=bins, density=True)
    return density, edges
