"""Command-line interface: test data files, print calibrations, run experiments.

Commands
--------
test            run one or more identity-covariance tests on a data file
null-params     print the Gaussian calibration (mu, v, centering) for (lam, n, p)
simulate        run a size/power grid (or emit a simulated dataset with --emit-data)
power-curve     paired analytic/empirical power against compound symmetry
critical-value  empirical null quantile of a test's z statistic

Exit codes: 0 success (including fail-to-reject), 1 any error, 2 rejection at
level eta when --exit-on-reject is set.  Output files are written in one shot
after all computation succeeds, so a failed run never leaves a partial file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import DomainError
from .montecarlo import (
    Method,
    Scenario,
    SimulationGrid,
    empirical_power_curve,
    materialize_sigma,
    run_grid,
    sample_mvn,
)
from .rmt import (
    DimensionSetup,
    ShrinkageParams,
    analytic_power_cs,
    null_asymptotics,
)
from .testing import (
    TestResult,
    chen_test,
    clrt_test,
    empirical_critical_value,
    lw_test,
    rlrt_test,
)


class CliError(Exception):
    """A user-facing error; reported on stderr with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with status 2
        raise CliError(message)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _meta(config: dict, seed) -> dict:
    return {
        "tool": f"hdcovtest {__version__}",
        "seed": seed,
        "config": _config_hash(config),
    }


def _render_csv(meta: dict, header: list[str], rows: list[list]) -> str:
    lines = [f"# {k}: {_fmt(v)}" for k, v in meta.items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _render_json(meta: dict, header: list[str], rows: list[list]) -> str:
    payload = {"meta": meta, "rows": [dict(zip(header, row)) for row in rows]}
    return json.dumps(payload, indent=2, default=str) + "\n"


def _render(fmt: str, meta: dict, header: list[str], rows: list[list]) -> str:
    if fmt == "json":
        return _render_json(meta, header, rows)
    return _render_csv(meta, header, rows)


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


@dataclass(frozen=True)
class ResultRecord:
    """Flat, losslessly serializable record of one test outcome.

    Float fields are written with 17 significant digits so the record
    round-trips to the bit through CSV.
    """

    method: str
    n: int
    p: int
    lam: float | None
    eta: float
    raw: float
    z: float
    p_value: float
    reject: bool
    tool_version: str
    seed: int | None
    timestamp: str

    HEADER = [
        "method", "n", "p", "lambda", "eta", "raw", "z", "p_value",
        "reject", "tool_version", "seed", "timestamp",
    ]

    @classmethod
    def from_test(cls, result: TestResult, lam: float | None,
                  seed: int | None, timestamp: str) -> "ResultRecord":
        return cls(
            method=result.method, n=result.setup.n, p=result.setup.p,
            lam=lam, eta=result.eta, raw=result.raw, z=result.z,
            p_value=result.p_value, reject=result.reject,
            tool_version=__version__, seed=seed, timestamp=timestamp,
        )

    def row(self) -> list:
        return [
            self.method, self.n, self.p, self.lam, self.eta, self.raw,
            self.z, self.p_value, self.reject, self.tool_version,
            self.seed, self.timestamp,
        ]

    @classmethod
    def from_row(cls, row: list[str]) -> "ResultRecord":
        return cls(
            method=row[0], n=int(row[1]), p=int(row[2]),
            lam=float(row[3]) if row[3] else None, eta=float(row[4]),
            raw=float(row[5]), z=float(row[6]), p_value=float(row[7]),
            reject=row[8] == "true", tool_version=row[9],
            seed=int(row[10]) if row[10] else None, timestamp=row[11],
        )


# ---------------------------------------------------------------------------
# data-file ingestion
# ---------------------------------------------------------------------------


def read_matrix(path: str, transpose: bool = False) -> np.ndarray:
    """Read a delimited numeric matrix; delimiter sniffed, header optional."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.readlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from exc
    lines = [
        (i + 1, ln.strip()) for i, ln in enumerate(raw_lines)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines:
        raise CliError(f"{path}: no data rows found.")
    delim = _sniff_delim(lines[0][1])
    first_fields = _split(lines[0][1], delim)
    start = 0
    if not all(_is_number(f) for f in first_fields):
        start = 1  # header row
        if len(lines) == 1:
            raise CliError(f"{path}: only a header row, no data.")
    width = None
    rows = []
    for lineno, text in lines[start:]:
        fields = _split(text, delim)
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise CliError(
                f"{path}:{lineno}: expected {width} fields, found {len(fields)}."
            )
        parsed = []
        for col, token in enumerate(fields, start=1):
            try:
                parsed.append(float(token))
            except ValueError:
                raise CliError(
                    f"{path}:{lineno}:{col}: could not parse {token!r} as a number."
                ) from None
        rows.append(parsed)
    values = np.asarray(rows, dtype=float)
    return values.T.copy() if transpose else values


def _sniff_delim(sample: str) -> str | None:
    best, best_count = None, 0
    for cand in (",", "\t", ";"):
        count = sample.count(cand)
        if count > best_count:
            best, best_count = cand, count
    return best  # None -> whitespace split


def _split(text: str, delim: str | None) -> list[str]:
    return [t.strip() for t in (text.split(delim) if delim else text.split())]


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def render_matrix_csv(values: np.ndarray, meta: dict) -> str:
    lines = [f"# {k}: {_fmt(v)}" for k, v in meta.items()]
    for row in np.atleast_2d(values):
        lines.append(",".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _comma_list(text: str, conv):
    return tuple(conv(t) for t in text.split(",") if t.strip())


def _beta_grid(text: str) -> tuple[float, ...]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError(f"bad beta grid {text!r}; use START:STOP:STEP or a comma list.")
        start, stop, step = (float(t) for t in parts)
        if step <= 0 or stop < start:
            raise CliError(f"bad beta grid {text!r}.")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + i * step for i in range(count))
    return _comma_list(text, float)


def build_parser() -> _Parser:
    parser = _Parser(prog="hdcovtest", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"hdcovtest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="test H0: covariance = identity on a data file")
    p_test.add_argument("--input", required=True, help="CSV/TSV file, observations in rows")
    p_test.add_argument("--method", default="rlrt",
                        help="comma list of rlrt, clrt, lw, chen, or 'all' (default rlrt)")
    p_test.add_argument("--lambda", dest="lam", type=float, default=0.5,
                        help="shrinkage intensity for rlrt (default 0.5)")
    p_test.add_argument("--eta", type=float, default=0.05, help="test level (default 0.05)")
    p_test.add_argument("--transpose", action="store_true",
                        help="input has variables in rows, observations in columns")
    p_test.add_argument("--format", choices=("csv", "json"), default="csv")
    p_test.add_argument("--output", default=None, help="output path (default stdout)")
    p_test.add_argument("--exit-on-reject", action="store_true",
                        help="exit with status 2 if any selected test rejects")

    p_np = sub.add_parser("null-params", help="print the Gaussian null calibration")
    p_np.add_argument("--lambda", dest="lam", type=float, required=True)
    p_np.add_argument("--n", type=int, required=True)
    p_np.add_argument("--p", type=int, required=True)
    p_np.add_argument("--format", choices=("csv", "json"), default="csv")
    p_np.add_argument("--output", default=None)

    p_sim = sub.add_parser("simulate", help="run a size/power grid, or emit data")
    p_sim.add_argument("--scenario", default="null",
                       help="comma list of null, a1, a2, a3, a4, cs:RHO (default null)")
    p_sim.add_argument("--n", default="20,40,80", help="comma list of sample sizes")
    p_sim.add_argument("--gamma", default="0.2,0.5,0.8", help="comma list of aspect ratios")
    p_sim.add_argument("--method", default="clrt,rlrt,lw,chen",
                       help="comma list of clrt, rlrt, lw, lw-corr, chen (default all)")
    p_sim.add_argument("--lambda", dest="lam", default="0.5",
                       help="comma list of shrinkage intensities for rlrt (default 0.5)")
    p_sim.add_argument("--reps", type=int, default=10_000)
    p_sim.add_argument("--chen-reps", type=int, default=200,
                       help="replication cap for chen (default 200)")
    p_sim.add_argument("--eta", type=float, default=0.05)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--a1-twos-rule", default="max",
                       help="how many variances the a1 scenario raises to 2: "
                            "max (=max(1, floor(0.2p))), min, or fixed:K")
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument("--format", choices=("csv", "json"), default="csv")
    p_sim.add_argument("--output", default=None)
    p_sim.add_argument("--emit-data", action="store_true",
                       help="write one simulated dataset instead of running the grid")
    p_sim.add_argument("--p", type=int, default=None,
                       help="dimension for --emit-data (overrides --gamma)")

    p_pc = sub.add_parser("power-curve", help="analytic vs empirical power "
                          "against compound symmetry I + (beta/p) J")
    p_pc.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p_pc.add_argument("--n", type=int, required=True)
    p_pc.add_argument("--gamma", type=float, default=None)
    p_pc.add_argument("--p", type=int, default=None)
    p_pc.add_argument("--beta-grid", default="0.8:4.0:0.4",
                      help="START:STOP:STEP or comma list (default 0.8:4.0:0.4)")
    p_pc.add_argument("--reps", type=int, default=10_000)
    p_pc.add_argument("--eta", type=float, default=0.05)
    p_pc.add_argument("--seed", type=int, default=0)
    p_pc.add_argument("--allow-close-spike", action="store_true",
                      help="evaluate beta <= sqrt(gamma_tilde) anyway (flagged rows)")
    p_pc.add_argument("--workers", type=int, default=1)
    p_pc.add_argument("--format", choices=("csv", "json"), default="csv")
    p_pc.add_argument("--output", default=None)

    p_cv = sub.add_parser("critical-value", help="empirical null quantile of a test")
    p_cv.add_argument("--method", required=True, help="rlrt, clrt, lw, or chen")
    p_cv.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p_cv.add_argument("--n", type=int, required=True)
    p_cv.add_argument("--gamma", type=float, default=None)
    p_cv.add_argument("--p", type=int, default=None)
    p_cv.add_argument("--eta", type=float, default=0.05)
    p_cv.add_argument("--reps", type=int, default=10_000)
    p_cv.add_argument("--seed", type=int, default=0)
    p_cv.add_argument("--workers", type=int, default=1)
    p_cv.add_argument("--format", choices=("csv", "json"), default="csv")
    p_cv.add_argument("--output", default=None)

    return parser


def _resolve_p(n: int, p: int | None, gamma: float | None) -> int:
    if p is not None:
        if p < 1:
            raise CliError(f"dimension must be >= 1, got {p}.")
        return p
    if gamma is None:
        raise CliError("give either --p or --gamma.")
    return max(1, round(gamma * n))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_test(args) -> int:
    config = {"command": "test", "input": args.input, "method": args.method,
              "lambda": args.lam, "eta": args.eta, "transpose": args.transpose}
    values = read_matrix(args.input, transpose=args.transpose)
    if values.shape[0] < 2:
        raise CliError(f"{args.input}: need at least 2 observations, got {values.shape[0]}.")
    names = ("rlrt", "clrt", "lw", "chen") if args.method == "all" \
        else _comma_list(args.method, str)
    timestamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    records = []
    for name in names:
        if name == "rlrt":
            result = rlrt_test(values, ShrinkageParams(args.lam), args.eta)
            lam = args.lam
        elif name == "clrt":
            result, lam = clrt_test(values, args.eta), None
        elif name == "lw":
            result, lam = lw_test(values, args.eta), None
        elif name == "chen":
            result, lam = chen_test(values, args.eta), None
        else:
            raise CliError(f"unknown method {name!r}.")
        records.append(ResultRecord.from_test(result, lam, None, timestamp))
    meta = _meta(config, seed=None)
    text = _render(args.format, meta, ResultRecord.HEADER, [r.row() for r in records])
    _write(args.output, text)
    if args.exit_on_reject and any(r.reject for r in records):
        return 2
    return 0


def _cmd_null_params(args) -> int:
    config = {"command": "null-params", "lambda": args.lam, "n": args.n, "p": args.p}
    setup = DimensionSetup(n=args.n, p=args.p)
    setup.require_subcritical()
    na = null_asymptotics(ShrinkageParams(args.lam), setup)
    header = ["lambda", "n", "p", "gamma_tilde", "mu", "v", "centering"]
    rows = [[args.lam, args.n, args.p, setup.gamma_tilde, na.mu, na.v, na.centering]]
    _write(args.output, _render(args.format, _meta(config, None), header, rows))
    return 0


def _cmd_simulate(args) -> int:
    if args.reps < 1:
        raise CliError(f"need --reps >= 1, got {args.reps}.")
    if args.emit_data:
        return _cmd_emit_data(args)
    scenarios = tuple(
        Scenario.named(s, a1_twos_rule=args.a1_twos_rule)
        for s in _comma_list(args.scenario, str)
    )
    lams = _comma_list(args.lam, float)
    methods: list[Method] = []
    for name in _comma_list(args.method, str):
        if name == "rlrt":
            methods.extend(Method("rlrt", lam) for lam in lams)
        else:
            methods.append(Method.parse(name))
    config = {"command": "simulate", "scenario": args.scenario, "n": args.n,
              "gamma": args.gamma, "method": args.method, "lambda": args.lam,
              "reps": args.reps, "chen_reps": args.chen_reps, "eta": args.eta,
              "seed": args.seed, "a1_twos_rule": args.a1_twos_rule}
    grid = SimulationGrid(
        scenarios=scenarios,
        sample_sizes=_comma_list(args.n, int),
        gammas=_comma_list(args.gamma, float),
        methods=tuple(methods),
        reps=args.reps,
        master_seed=args.seed,
        eta=args.eta,
        chen_reps=args.chen_reps,
    )
    results = run_grid(grid, workers=args.workers)
    header = ["scenario", "n", "p", "gamma", "method", "lambda", "reps",
              "rate", "mc_se", "seed", "error"]
    rows = [
        [c.scenario, c.n, c.p, c.gamma, c.method, c.lam, c.reps,
         c.rate, c.mc_se, args.seed, c.error or ""]
        for c in results
    ]
    _write(args.output, _render(args.format, _meta(config, args.seed), header, rows))
    return 0


def _cmd_emit_data(args) -> int:
    scenario_names = _comma_list(args.scenario, str)
    if len(scenario_names) != 1:
        raise CliError("--emit-data needs exactly one --scenario.")
    ns = _comma_list(args.n, int)
    if len(ns) != 1:
        raise CliError("--emit-data needs exactly one --n.")
    gammas = _comma_list(args.gamma, float)
    gamma = gammas[0] if len(gammas) == 1 else None
    if args.p is None and gamma is None:
        raise CliError("--emit-data needs --p or a single --gamma.")
    n = ns[0]
    p = _resolve_p(n, args.p, gamma)
    scenario = Scenario.named(scenario_names[0], a1_twos_rule=args.a1_twos_rule)
    config = {"command": "simulate --emit-data", "scenario": scenario_names[0],
              "n": n, "p": p, "seed": args.seed}
    sigma = materialize_sigma(scenario, p)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
    data = sample_mvn(n, sigma, rng)
    _write(args.output, render_matrix_csv(data.values, _meta(config, args.seed)))
    return 0


def _cmd_power_curve(args) -> int:
    if args.reps < 1:
        raise CliError(f"need --reps >= 1, got {args.reps}.")
    n = args.n
    p = _resolve_p(n, args.p, args.gamma)
    setup = DimensionSetup(n=n, p=p)
    setup.require_subcritical()
    betas = _beta_grid(args.beta_grid)
    if list(betas) != sorted(set(betas)):
        raise CliError("beta grid must be strictly increasing.")
    threshold = math.sqrt(setup.gamma_tilde)
    close = [b for b in betas if b <= threshold]
    if close and not args.allow_close_spike:
        raise CliError(
            f"beta values {close} are not distant spikes at gamma_tilde="
            f"{setup.gamma_tilde:.4g} (need beta > {threshold:.4g}); "
            "pass --allow-close-spike to evaluate them anyway."
        )
    config = {"command": "power-curve", "lambda": args.lam, "n": n, "p": p,
              "beta_grid": list(betas), "reps": args.reps, "eta": args.eta,
              "seed": args.seed, "allow_close_spike": args.allow_close_spike}
    params = ShrinkageParams(args.lam)
    import warnings as _warnings

    analytic = []
    for beta in betas:
        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore", RuntimeWarning)
            analytic.append(
                analytic_power_cs(params, setup, beta, args.eta,
                                  allow_close_spike=args.allow_close_spike)
            )
    empirical = empirical_power_curve(
        betas, setup, args.lam, args.reps, args.seed,
        eta=args.eta, workers=args.workers,
    )
    header = ["beta", "analytic_power", "empirical_power", "mc_se", "close_spike"]
    rows = []
    for (beta, emp), ana in zip(empirical, analytic):
        se = math.sqrt(emp * (1.0 - emp) / args.reps)
        rows.append([beta, ana, emp, se, beta <= threshold])
    _write(args.output, _render(args.format, _meta(config, args.seed), header, rows))
    return 0


def _cmd_critical_value(args) -> int:
    n = args.n
    p = _resolve_p(n, args.p, args.gamma)
    setup = DimensionSetup(n=n, p=p)
    method = Method.parse(args.method)
    if method.kind == "rlrt" and method.lam is None:
        method = Method("rlrt", args.lam)
    config = {"command": "critical-value", "method": method.label, "n": n,
              "p": p, "eta": args.eta, "reps": args.reps, "seed": args.seed}
    value = empirical_critical_value(
        method, setup, args.eta, args.reps, args.seed, workers=args.workers,
    )
    header = ["method", "n", "p", "eta", "reps", "seed", "critical_z"]
    rows = [[method.label, n, p, args.eta, args.reps, args.seed, value]]
    _write(args.output, _render(args.format, _meta(config, args.seed), header, rows))
    return 0


_COMMANDS = {
    "test": _cmd_test,
    "null-params": _cmd_null_params,
    "simulate": _cmd_simulate,
    "power-curve": _cmd_power_curve,
    "critical-value": _cmd_critical_value,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
