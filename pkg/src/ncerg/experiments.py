"""Experiment runner: named suites, machine-readable reports, plot data.

A run executes one suite against a configured algebra / semigroup / weight,
writing CSV tables to ``<out>/tables``, certificate JSON files to
``<out>/certs`` and a ``report.json`` index.  Everything written is a pure
function of the configuration (including the seed): reports contain no
timestamps, no absolute paths and no wall times, so identical configurations
produce byte-identical output trees.  Wall time is kept on the in-memory
report only.

``NCERG_THREADS`` caps the thread pool used to materialize operator families;
results are collected in submission order, so the file contents do not depend
on the worker count.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .algebra import (
    TracialAlgebra,
    min_eig,
    pnorm,
    random_positive,
    random_self_adjoint,
)
from .averaging import (
    BesicovitchWeight,
    QuadratureConfig,
    TrigTerm,
    besicovitch_error,
    cesaro_average,
    sandwich_check,
    substitution_bound_check,
    trig_average,
    weight_from_config,
    weighted_average,
)
from .banach import (
    AssemblyError,
    OracleContractError,
    SchemeError,
    assemble_certificate,
    cesaro_map_family,
    make_dense_certifier,
    make_maximal_oracle,
    scheme_from_semigroup,
)
from .bau import (
    MaximalParams,
    ScheduleExhaustedError,
    TransferPremiseError,
    bau_cauchy_certify,
    double_average_certificate,
    lp_limit_check,
    maximal_projection,
    perturbation_transfer,
)
from .semigroups import Semigroup, semigroup_from_config, validate_absolute_contraction

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunReport",
    "run",
    "emit_plot_data",
    "build_schemas",
    "SUITE_NAMES",
]

SUITE_NAMES = (
    "validate-semigroup",
    "local-avg",
    "sandwich",
    "maximal",
    "weighted-avg",
    "besicovitch",
    "banach-check",
    "full",
)

_SUITE_ORDER = SUITE_NAMES[:-1]
_SUITE_INDEX = {name: i for i, name in enumerate(SUITE_NAMES)}


class ConfigError(ValueError):
    """Configuration file or parameter outside its documented range."""


def _default_weight_spec() -> dict:
    return {
        "trig": [
            {"kappa_re": 0.55, "kappa_im": 0.0, "theta": 0.3},
            {"kappa_re": 0.25, "kappa_im": 0.1, "theta": -0.21},
        ],
        "residual": {"name": "cos", "amplitude": 0.04, "frequency": 7.0},
        "sup_bound": 0.95,
    }


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of a run.  The seed fixes every random draw.

    Documented ranges: total algebra dimension in [1, 64]; epsilon,
    banach_epsilon in (0, 100]; p >= 1; C, alpha > 0; quadrature tolerance
    > 0; grid sizes in [2, 512]; counts in [1, 1000].
    """

    blocks: tuple[int, ...] = (2, 4)
    weights: tuple[float, ...] = (1.0, 0.5)
    semigroup: dict = field(
        default_factory=lambda: {"variant": "unitary_flow", "hamiltonian": "random", "norm": 1.0}
    )
    weight: dict = field(default_factory=_default_weight_spec)
    T_lo: float = 1e-5
    T_hi: float = 10.0
    T_n: int = 48
    dyadic_exp_max: int = 12
    epsilon: float = 0.1
    banach_epsilon: float = 0.5
    p: float = 1.0
    C: float = 1.0
    alpha: float = 1.0
    maximal_epsilons: tuple[float, ...] = (0.5, 0.2, 0.1)
    n_random: int = 20
    weighted_cases: int = 48
    sandwich_grid: tuple[float, ...] = (0.1, 0.5, 1.0)
    besicovitch_tail_bound: float = 0.05
    banach_n_approx: int = 3
    banach_map_exps: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)
    quadrature: dict = field(default_factory=dict)
    seed: int = 20240810

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(int(n) for n in self.blocks))
        object.__setattr__(self, "weights", tuple(float(c) for c in self.weights))
        object.__setattr__(
            self, "maximal_epsilons", tuple(float(e) for e in self.maximal_epsilons)
        )
        object.__setattr__(
            self, "sandwich_grid", tuple(float(a) for a in self.sandwich_grid)
        )
        object.__setattr__(
            self, "banach_map_exps", tuple(int(k) for k in self.banach_map_exps)
        )
        total = sum(self.blocks)
        if not 1 <= total <= 64:
            raise ConfigError(f"total algebra dimension {total} outside [1, 64]")
        if len(self.blocks) != len(self.weights):
            raise ConfigError("blocks and weights must have equal length")
        if any(c <= 0 for c in self.weights):
            raise ConfigError("trace weights must be positive")
        for name, val, lo, hi in (
            ("epsilon", self.epsilon, 0.0, 100.0),
            ("banach_epsilon", self.banach_epsilon, 0.0, 100.0),
            ("C", self.C, 0.0, math.inf),
            ("alpha", self.alpha, 0.0, math.inf),
            ("besicovitch_tail_bound", self.besicovitch_tail_bound, 0.0, 1.0),
        ):
            if not lo < val <= hi:
                raise ConfigError(f"{name}={val} outside ({lo}, {hi}]")
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if not 2 <= self.T_n <= 512:
            raise ConfigError("T_n outside [2, 512]")
        if not (0 < self.T_lo < self.T_hi):
            raise ConfigError("need 0 < T_lo < T_hi")
        if not 1 <= self.dyadic_exp_max <= 40:
            raise ConfigError("dyadic_exp_max outside [1, 40]")
        for name, val in (
            ("n_random", self.n_random),
            ("weighted_cases", self.weighted_cases),
            ("banach_n_approx", self.banach_n_approx),
        ):
            if not 1 <= val <= 1000:
                raise ConfigError(f"{name}={val} outside [1, 1000]")
        if int(self.seed) < 0:
            raise ConfigError("seed must be nonnegative")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["blocks"] = list(self.blocks)
        out["weights"] = list(self.weights)
        out["maximal_epsilons"] = list(self.maximal_epsilons)
        out["sandwich_grid"] = list(self.sandwich_grid)
        out["banach_map_exps"] = list(self.banach_map_exps)
        return out

    def quad(self) -> QuadratureConfig:
        try:
            return QuadratureConfig(**self.quadrature)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad quadrature config: {exc}") from exc


@dataclass
class RunReport:
    """Index of what a run produced.  Serialized without wall time or paths
    outside the output directory, so equal configurations give equal bytes."""

    experiment: str
    passed: dict[str, bool]
    tables: dict[str, str]
    certificates: dict[str, str]
    wall_time_s: float
    outdir: Path
    config: dict

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_json_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "passed": {k: self.passed[k] for k in sorted(self.passed)},
            "tables": {k: self.tables[k] for k in sorted(self.tables)},
            "certificates": {
                k: self.certificates[k] for k in sorted(self.certificates)
            },
            "config": self.config,
        }


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _pmap(fn: Callable, items: Sequence):
    workers = int(os.environ.get("NCERG_THREADS", "1") or "1")
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


class _Env:
    """Per-run context shared by suite implementations."""

    def __init__(self, cfg: ExperimentConfig, outdir: Path):
        self.cfg = cfg
        self.outdir = outdir
        self.alg = TracialAlgebra(cfg.blocks, cfg.weights)
        self.quadrature = cfg.quad()
        rng0 = np.random.default_rng([cfg.seed, 0])
        self.sg: Semigroup = semigroup_from_config(self.alg, cfg.semigroup, rng0)
        self.weight: BesicovitchWeight = weight_from_config(cfg.weight)
        self.passed: dict[str, bool] = {}
        self.tables: dict[str, str] = {}
        self.certs: dict[str, str] = {}

    def rng(self, purpose: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, purpose])

    def write_table(self, name: str, header: Sequence[str], rows) -> None:
        rel = f"tables/{name}.csv"
        path = self.outdir / rel
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
        self.tables[name] = rel

    def write_cert(self, name: str, payload: dict) -> None:
        rel = f"certs/{name}.json"
        path = self.outdir / rel
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.certs[name] = rel


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def _suite_validate(env: _Env) -> None:
    ts = np.geomspace(1e-4, 10.0, 10)
    report = validate_absolute_contraction(env.sg, ts, rng=env.rng(1))
    rows = [
        (kind, t, value)
        for (t, pos, unital, texc) in report.per_t
        for kind, value in (("positivity", pos), ("unitality", unital), ("trace", texc))
        if value > 0.0
    ]
    env.write_table("validate_semigroup_violations", ["kind", "t", "value"], rows)
    env.write_table("validate_semigroup_continuity", ["s", "modulus"], report.continuity)
    env.write_cert("validation", report.to_json_dict())
    env.passed["validate-semigroup:absolute_contraction"] = report.passed


def _suite_local_avg(env: _Env) -> None:
    cfg, alg, sg, quad = env.cfg, env.alg, env.sg, env.quadrature
    rng = env.rng(2)
    x = random_self_adjoint(alg, rng, norm=1.0)
    Ts = [2.0**-k for k in range(cfg.dyadic_exp_max + 1)]
    family = [(T, cesaro_average(sg, x, T, quad)) for T in Ts]

    for p in (1.0, 2.0):
        rows = []
        prev = math.inf
        monotone = True
        bounds_ok = True
        x_norm = pnorm(alg, x, p)
        for T, y in family:
            err = pnorm(alg, y - x, p)
            samples = T * np.linspace(1.0 / 16.0, 1.0, 16)
            bound = max(pnorm(alg, sg.apply(s, x) - x, p) for s in samples)
            slack = bound - err
            rows.append((T, err, bound, slack))
            monotone &= err <= prev * (1 + 1e-9) + 1e-15
            bounds_ok &= slack >= -1e-8
            prev = err
        tag = f"p{int(p)}"
        env.write_table(f"local_avg_{tag}", ["T", "norm_p", "bound", "slack"], rows)
        env.passed[f"local-avg:decay_monotone_{tag}"] = monotone
        env.passed[f"local-avg:final_below_{tag}"] = rows[-1][1] < 1e-3 * x_norm
        env.passed[f"local-avg:bounds_hold_{tag}"] = bounds_ok

    cert = bau_cauchy_certify(
        family, epsilon=0.1 * alg.trace_of_identity, tol=1e-3 * x.norm_inf()
    )
    env.write_cert("local_avg_cauchy", cert.to_json_dict())
    env.passed["local-avg:cauchy_certificate"] = cert.ok

    # shrinking-window construction around a fixed base average
    x_pos = random_positive(alg, rng, norm=1.0)
    schedule = np.geomspace(0.25, 1e-7, 22)
    window_cert = double_average_certificate(
        sg, x_pos, b=1.0, p=cfg.p, epsilon=cfg.epsilon, a_schedule=schedule, quad=quad
    )
    env.write_cert("local_avg_window", window_cert.to_json_dict())
    env.passed["local-avg:window_certificate"] = (
        window_cert.ok
        and window_cert.cotrace < cfg.epsilon
        and window_cert.params["final_decay"] < 1e-6
    )


def _suite_sandwich(env: _Env) -> None:
    cfg = env.cfg
    rng = env.rng(3)
    xs = [random_positive(env.alg, rng, norm=1.0) for _ in range(cfg.n_random)]
    rows = []
    ok = True
    for case, x in enumerate(xs):
        for a in cfg.sandwich_grid:
            for b in cfg.sandwich_grid:
                lo, up = sandwich_check(env.sg, x, a, b, env.quadrature)
                rows.append((case, a, b, lo, up))
                ok &= lo >= -1e-8 and up >= -1e-8
    env.write_table(
        "sandwich", ["case", "a", "b", "lower_slack", "upper_slack"], rows
    )
    env.passed["sandwich:slacks_nonnegative"] = ok


def _suite_maximal(env: _Env) -> None:
    cfg, alg, sg, quad = env.cfg, env.alg, env.sg, env.quadrature
    rng = env.rng(4)
    xs = [random_self_adjoint(alg, rng, norm=1.0) for _ in range(cfg.n_random)]
    T_grid = np.geomspace(cfg.T_lo, cfg.T_hi, cfg.T_n)

    def materialize(x):
        return {float(T): cesaro_average(sg, x, T, quad) for T in T_grid}

    families = _pmap(materialize, xs)
    rows = []
    bound_ok = True
    per_eps_c = {}
    for eps in cfg.maximal_epsilons:
        cs = []
        for case, (x, fam) in enumerate(zip(xs, families)):
            cert = maximal_projection(
                sg,
                x,
                MaximalParams(C=cfg.C, p=cfg.p, epsilon=eps),
                T_grid,
                quad,
                family=fam,
            )
            rows.append(
                (
                    eps,
                    case,
                    cert.cotrace,
                    cert.achieved_bound,
                    cert.params["cotrace_cap"],
                    cert.params["empirical_C"],
                )
            )
            bound_ok &= cert.achieved_bound <= eps + 1e-8
            cs.append(cert.params["empirical_C"])
            if case == 0:
                env.write_cert(f"maximal_eps{_fmt(eps)}", cert.to_json_dict())
        per_eps_c[eps] = max(cs)
    env.write_table(
        "maximal",
        ["epsilon", "case", "cotrace", "achieved_bound", "cotrace_cap", "empirical_C"],
        rows,
    )
    cvals = [per_eps_c[e] for e in cfg.maximal_epsilons]
    finite = all(math.isfinite(c) and c > 0 for c in cvals)
    stable = finite and max(cvals) / min(cvals) < 10.0
    env.passed["maximal:compressed_bounds"] = bound_ok
    env.passed["maximal:empirical_C_finite"] = finite
    env.passed["maximal:empirical_C_stable"] = stable


def _random_weight(rng: np.random.Generator) -> BesicovitchWeight:
    n_terms = int(rng.integers(1, 4))
    amps = rng.uniform(0.05, 1.0, n_terms)
    amps *= 0.85 / amps.sum()
    terms = tuple(
        TrigTerm(
            complex(a * math.cos(ph), a * math.sin(ph)),
            float(rng.uniform(-0.45, 0.45)),
        )
        for a, ph in zip(amps, rng.uniform(0, 2 * math.pi, n_terms))
    )
    amp = float(rng.uniform(0.0, 0.1))
    freq = float(rng.uniform(0.5, 9.0))
    residual = (lambda ts: amp * np.cos(freq * np.asarray(ts))) if amp > 0 else None
    return BesicovitchWeight(terms, residual, amp if amp > 0 else 0.0)


def _suite_weighted(env: _Env) -> None:
    cfg, alg, sg, quad = env.cfg, env.alg, env.sg, env.quadrature
    rng = env.rng(5)
    T_list = np.geomspace(1e-3, 1.0, 12)
    rows = []
    sub_ok = True
    for case in range(cfg.weighted_cases):
        b = _random_weight(rng)
        x = random_positive(alg, rng, norm=1.0)
        T = float(T_list[case % len(T_list)])
        lhs, rhs = substitution_bound_check(sg, b, x, T, quad)
        sub_ok &= lhs <= rhs + 1e-8
        rows.append((T, lhs, rhs, rhs - lhs))
    env.write_table("weighted_avg", ["T", "norm_p", "bound", "slack"], rows)
    env.passed["weighted-avg:substitution_bound"] = sub_ok

    # structural identities of the weighted average on the configured weight
    b = env.weight
    x = random_positive(alg, rng, norm=1.0)
    T = 0.75
    wav = weighted_average(sg, b, x, T, quad)
    scale = max(x.norm_inf(), 1e-300)
    conj_gap = (wav.H - weighted_average(sg, b.conjugated(), x, T, quad)).norm_inf()
    real_av = weighted_average(sg, b.real_part(), x, T, quad)
    imag_av = weighted_average(sg, b.imag_part(), x, T, quad)
    decomp_gap = (wav - (real_av + 1j * imag_av)).norm_inf()
    beta = cesaro_average(sg, x, T, quad)
    domination = min_eig((beta - real_av).herm())
    norm_ok = all(
        pnorm(alg, wav, p) <= 2.0 * b.sup_bound * pnorm(alg, x, p) + 1e-8
        for p in (1.0, 2.0, math.inf)
    )
    env.passed["weighted-avg:conjugation"] = conj_gap <= 1e-10 * scale
    env.passed["weighted-avg:decomposition"] = decomp_gap <= 1e-12 * scale
    env.passed["weighted-avg:domination"] = domination >= -1e-8
    env.passed["weighted-avg:norm_bound"] = norm_ok

    # transfer from the trig-only averages to the full weighted averages
    Ts = [2.0**-k for k in range(11)]
    base = [(T, trig_average(sg, b.terms, x, T, quad)) for T in Ts]
    tilde = [(T, weighted_average(sg, b, x, T, quad)) for T in Ts]
    base_cert = bau_cauchy_certify(
        base, epsilon=0.1 * alg.trace_of_identity, tol=1e-3 * x.norm_inf()
    )
    eps_gap = 2.0 * cfg.besicovitch_tail_bound * x.norm_inf()
    try:
        transferred = perturbation_transfer(tilde, base, base_cert, [eps_gap])
        env.write_cert("weighted_transfer", transferred.to_json_dict())
        env.passed["weighted-avg:transfer"] = transferred.ok and base_cert.ok
    except TransferPremiseError:
        env.passed["weighted-avg:transfer"] = False
        return
    limit = tilde[-1][1]
    rep = lp_limit_check(tilde, cfg.p, limit)
    cap = 2.0 * b.sup_bound * pnorm(alg, x, cfg.p)
    env.passed["weighted-avg:lp_limit"] = rep.passed and rep.limit_norm <= cap + 1e-8


def _suite_besicovitch(env: _Env) -> None:
    cfg = env.cfg
    grid = np.geomspace(1.0, cfg.T_lo, cfg.T_n)
    table = besicovitch_error(env.weight, grid, env.quadrature)
    env.write_table("besicovitch", ["T", "local_mean_gap"], table.rows)
    env.passed["besicovitch:tail_sup_below_bound"] = (
        table.tail_sup < cfg.besicovitch_tail_bound
    )


def _suite_banach(env: _Env) -> None:
    cfg, alg, sg, quad = env.cfg, env.alg, env.sg, env.quadrature
    rng = env.rng(7)
    x = random_self_adjoint(alg, rng, norm=1.0)
    T_maps = [2.0**-k for k in cfg.banach_map_exps]
    maps = cesaro_map_family(sg, T_maps, quad)

    emp = []
    for eps in cfg.maximal_epsilons:
        cert = maximal_projection(
            sg, x, MaximalParams(C=cfg.C, p=cfg.p, epsilon=eps), T_maps, quad
        )
        emp.append(cert.params["empirical_C"])
    c_use = max(max(emp), 1e-6)

    eps = cfg.banach_epsilon
    oracle = make_maximal_oracle(sg, T_maps, cfg.p, c_use, cfg.alpha, quad)
    scheme = scheme_from_semigroup(sg, cfg.p, cfg.alpha, quad)
    certifier = make_dense_certifier(maps, tol=eps / 3.0)
    try:
        asm = assemble_certificate(
            maps, x, eps, scheme, oracle, certifier, n_approx=cfg.banach_n_approx
        )
    except (AssemblyError, SchemeError, OracleContractError, ScheduleExhaustedError) as exc:
        env.write_cert("banach_failure", {"error": str(exc)})
        env.passed["banach-check:assembled"] = False
        env.passed["banach-check:replay"] = False
        env.passed["banach-check:final_cotrace"] = False
        return
    env.write_table(
        "banach_steps",
        ["step", "witness", "claimed", "achieved"],
        [
            (s.name, "" if s.witness is None else ";".join(str(w) for w in s.witness), s.claimed, s.achieved)
            for s in asm.steps
        ],
    )
    env.write_cert("banach_assembly", asm.to_json_dict())
    devs = asm.replay(maps, x)
    env.passed["banach-check:assembled"] = True
    env.passed["banach-check:replay"] = max(devs.values(), default=0.0) <= 1e-10
    env.passed["banach-check:final_cotrace"] = asm.cotrace < eps * (c_use + 1.0) / 2.0


_SUITES: dict[str, Callable[[_Env], None]] = {
    "validate-semigroup": _suite_validate,
    "local-avg": _suite_local_avg,
    "sandwich": _suite_sandwich,
    "maximal": _suite_maximal,
    "weighted-avg": _suite_weighted,
    "besicovitch": _suite_besicovitch,
    "banach-check": _suite_banach,
}


def run(config: ExperimentConfig, suite: str, outdir: str | Path) -> RunReport:
    """Execute a named suite; writes tables, certificates and report.json."""
    if suite not in SUITE_NAMES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {SUITE_NAMES}")
    out = Path(outdir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    (out / "certs").mkdir(parents=True, exist_ok=True)
    env = _Env(config, out)
    start = time.perf_counter()
    if suite == "full":
        for name in _SUITE_ORDER:
            _SUITES[name](env)
    else:
        _SUITES[suite](env)
    wall = time.perf_counter() - start
    report = RunReport(
        experiment=suite,
        passed=env.passed,
        tables=env.tables,
        certificates=env.certs,
        wall_time_s=wall,
        outdir=out,
        config=config.to_dict(),
    )
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    missing = [
        rel
        for rel in list(report.tables.values()) + list(report.certificates.values())
        if not (out / rel).is_file()
    ]
    if missing:  # pragma: no cover - internal invariant
        raise RuntimeError(f"report references missing files: {missing}")
    return report


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

_PLOT_SCHEMA = {
    "plot_decay.csv": {
        "columns": ["table", "T", "value"],
        "meaning": "decay curves: second column of every two-column table",
    },
    "plot_bounds.csv": {
        "columns": ["table", "T", "achieved", "bound", "slack"],
        "meaning": "achieved-versus-bound rows from every sweep table",
    },
    "certificates_summary.json": {
        "keys": ["cotrace", "epsilon", "achieved_bound", "flags"],
        "meaning": "one summary entry per certificate file",
    },
}


def emit_plot_data(report: RunReport) -> dict[str, str]:
    """Write plot-ready CSV/JSON files derived from a run's tables."""
    plots = report.outdir / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    decay_rows = []
    bound_rows = []
    for name in sorted(report.tables):
        path = report.outdir / report.tables[name]
        with open(path, "r", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                continue
            rows = list(reader)
        if header[:4] == ["T", "norm_p", "bound", "slack"]:
            for row in rows:
                bound_rows.append((name, row[0], row[1], row[2], row[3]))
                decay_rows.append((name, row[0], row[1]))
        elif len(header) == 2:
            for row in rows:
                decay_rows.append((name, row[0], row[1]))
    written = {}
    for fname, header, rows in (
        ("plot_decay.csv", ["table", "T", "value"], decay_rows),
        ("plot_bounds.csv", ["table", "T", "achieved", "bound", "slack"], bound_rows),
    ):
        with open(plots / fname, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        written[fname] = f"plots/{fname}"

    summary = {}
    for name in sorted(report.certificates):
        with open(report.outdir / report.certificates[name], "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        summary[name] = {
            k: payload[k]
            for k in ("cotrace", "epsilon", "achieved_bound", "flags", "passed")
            if k in payload
        }
    with open(plots / "certificates_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written["certificates_summary.json"] = "plots/certificates_summary.json"
    with open(plots / "SCHEMA.json", "w", encoding="utf-8") as fh:
        json.dump(_PLOT_SCHEMA, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written["SCHEMA.json"] = "plots/SCHEMA.json"
    return written


def build_schemas() -> dict:
    """Schemas printed by the command-line ``schema`` subcommand."""
    return {
        "config": {
            "defaults": ExperimentConfig().to_dict(),
            "notes": "JSON object; unknown keys rejected; flags override file values",
        },
        "report.json": {
            "keys": ["experiment", "passed", "tables", "certificates", "config"],
            "determinism": "no timestamps, wall times or absolute paths",
        },
        "sweep_csv": {"columns": ["T", "norm_p", "bound", "slack"]},
        "tables": {
            "validate_semigroup_violations": ["kind", "t", "value"],
            "validate_semigroup_continuity": ["s", "modulus"],
            "local_avg_p1": ["T", "norm_p", "bound", "slack"],
            "local_avg_p2": ["T", "norm_p", "bound", "slack"],
            "sandwich": ["case", "a", "b", "lower_slack", "upper_slack"],
            "maximal": [
                "epsilon",
                "case",
                "cotrace",
                "achieved_bound",
                "cotrace_cap",
                "empirical_C",
            ],
            "weighted_avg": ["T", "norm_p", "bound", "slack"],
            "besicovitch": ["T", "local_mean_gap"],
            "banach_steps": ["step", "witness", "claimed", "achieved"],
        },
        "certificate_json": {
            "keys": [
                "cotrace",
                "epsilon",
                "achieved_bound",
                "family",
                "grid",
                "params",
                "flags",
                "decay",
                "projection",
            ]
        },
        "plots": _PLOT_SCHEMA,
    }
