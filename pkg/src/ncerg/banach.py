"""Constructive extension engine for bilateral-almost-uniform convergence.

Given a family of linear maps, a dense-approximation scheme and a
maximal-inequality oracle, the engine builds one projection f under which all
pairwise map differences on x are uniformly small, by the standard route:
approximants x_n with geometrically shrinking gaps, one oracle projection per
approximant, a meet p, a dense-set Cauchy certificate q for a well-chosen
approximant, and f = p ^ q with a three-way bound split.  Every intermediate
bound is recorded and can be replayed; the engine only ever touches pairwise
differences a_m(x) - a_n(x), never a limit object.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebra import Operator, Projection, meet_all, pnorm, proj_meet
from .averaging import DEFAULT_QUAD, QuadratureConfig, cesaro_average, dense_approximant
from .bau import (
    ProjectionCertificate,
    bau_cauchy_certify,
    compressed_norm,
    first_index_below,
    maximal_projection,
    MaximalParams,
)
from .config import DEFAULT_TOLS
from .semigroups import Semigroup, continuity_modulus

__all__ = [
    "ApproximationScheme",
    "ConditionOneOracle",
    "MapFamily",
    "StepRecord",
    "AssemblyCertificate",
    "AssemblyError",
    "SchemeError",
    "OracleContractError",
    "assemble_certificate",
    "scheme_from_semigroup",
    "cesaro_map_family",
    "make_maximal_oracle",
    "make_dense_certifier",
]


class SchemeError(RuntimeError):
    def __init__(self, achieved: float, target: float):
        super().__init__(
            f"approximation scheme could not reach gap {target:.3e}; "
            f"achieved {achieved:.3e}"
        )
        self.achieved = achieved
        self.target = target


class OracleContractError(RuntimeError):
    def __init__(self, which: str, achieved: float, cap: float):
        super().__init__(
            f"oracle certificate violates its {which} bound: "
            f"{achieved:.3e} vs cap {cap:.3e}"
        )
        self.which = which
        self.achieved = achieved
        self.cap = cap


class AssemblyError(RuntimeError):
    def __init__(self, step: str, witness, achieved: float, claimed: float):
        super().__init__(
            f"assembly step {step!r} failed at witness {witness}: "
            f"achieved {achieved:.3e}, claimed {claimed:.3e}"
        )
        self.step = step
        self.witness = witness
        self.achieved = achieved
        self.claimed = claimed


@dataclass(frozen=True)
class MapFamily:
    """Indexed family of linear maps, label -> (label, operator) evaluation."""

    labels: tuple[float, ...]
    func: Callable[[float, Operator], Operator]

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(float(t) for t in self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    def at(self, i: int, x: Operator) -> Operator:
        return self.func(self.labels[i], x)

    def evaluate_all(self, x: Operator) -> list[Operator]:
        return [self.func(t, x) for t in self.labels]


def cesaro_map_family(
    sg: Semigroup, T_list: Sequence[float], quad: QuadratureConfig = DEFAULT_QUAD
) -> MapFamily:
    return MapFamily(tuple(T_list), lambda T, y: cesaro_average(sg, y, T, quad))


@dataclass(frozen=True)
class ApproximationScheme:
    """Generator of approximants with a guaranteed norm gap.

    ``generate(x, n, eps)`` must return x_n with
    ||x_n - x||_p < (eps / 2^{n+1})^{2/alpha}; ``make`` verifies the gap at
    generation time and raises :class:`SchemeError` otherwise.
    """

    generate: Callable[[Operator, int, float], Operator]
    norm_p: float
    alpha: float

    def gap_bound(self, n: int, eps: float) -> float:
        return (eps / 2.0 ** (n + 1)) ** (2.0 / self.alpha)

    def make(self, x: Operator, n: int, eps: float) -> tuple[Operator, float]:
        x_n = self.generate(x, n, eps)
        gap = pnorm(x.algebra, x_n - x, self.norm_p)
        bound = self.gap_bound(n, eps)
        if not gap < bound:
            raise SchemeError(gap, bound)
        return x_n, gap


@dataclass(frozen=True)
class ConditionOneOracle:
    """Uniform-control oracle: (y, eps) -> certificate with both bounds.

    The returned certificate must satisfy tau(p_perp) <= C (eps^-1 ||y||_X)^alpha
    and an achieved compressed bound below eps; both are re-verified here and
    a violation raises :class:`OracleContractError`.
    """

    build: Callable[[Operator, float], ProjectionCertificate]
    C: float
    alpha: float
    norm: Callable[[Operator], float]
    slack: float = 1e-12

    def __call__(self, y: Operator, eps: float) -> ProjectionCertificate:
        cert = self.build(y, eps)
        size = self.norm(y)
        cap = self.C * (size / eps) ** self.alpha if size > 0 else 0.0
        if cert.cotrace > cap + self.slack:
            raise OracleContractError("cotrace", cert.cotrace, cap)
        if cert.achieved_bound > eps + self.slack:
            raise OracleContractError("compressed", cert.achieved_bound, eps)
        return cert


def make_maximal_oracle(
    sg: Semigroup,
    T_grid: Sequence[float],
    p: float,
    C: float,
    alpha: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> ConditionOneOracle:
    """Condition-one oracle backed by the maximal projection over a T grid."""

    def build(y: Operator, eps: float) -> ProjectionCertificate:
        return maximal_projection(
            sg, y.herm(), MaximalParams(C=C, p=p, epsilon=eps), T_grid, quad
        )

    alg = sg.algebra
    return ConditionOneOracle(
        build=build, C=C, alpha=alpha, norm=lambda y: pnorm(alg, y, p)
    )


def make_dense_certifier(
    maps: MapFamily, tol: float = DEFAULT_TOLS.decay
) -> Callable[[Operator, float], ProjectionCertificate]:
    """Cauchy certifier for the map family evaluated on a dense-set element."""

    def certify(y: Operator, eps_budget: float) -> ProjectionCertificate:
        values = maps.evaluate_all(y)
        return bau_cauchy_certify(
            list(zip(maps.labels, values)), eps_budget, tol=tol
        )

    return certify


@dataclass
class StepRecord:
    name: str
    claimed: float
    achieved: float
    witness: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.achieved <= self.claimed

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "claimed": self.claimed,
            "achieved": self.achieved,
            "witness": None if self.witness is None else list(self.witness),
        }


@dataclass
class AssemblyCertificate:
    """Full trace of an extension run: projections, indices, bound ledger."""

    projection: Projection
    cotrace: float
    epsilon: float
    C: float
    n0: int
    N0_index: int
    steps: list[StepRecord]
    budget_spent: float
    approximants: tuple[Operator, ...] = field(repr=False, default=())
    approximant_projs: tuple[Projection, ...] = field(repr=False, default=())
    dense_cert: ProjectionCertificate | None = field(repr=False, default=None)
    meet_proj: Projection | None = field(repr=False, default=None)

    def to_json_dict(self) -> dict:
        return {
            "cotrace": self.cotrace,
            "epsilon": self.epsilon,
            "C": self.C,
            "n0": self.n0,
            "N0_index": self.N0_index,
            "budget_spent": self.budget_spent,
            "steps": [s.to_json_dict() for s in self.steps],
        }

    def replay(self, maps: MapFamily, x: Operator) -> dict[str, float]:
        """Recompute every recorded bound; returns the deviations by step."""
        recomputed = _assemble_records(
            maps,
            x,
            self.epsilon,
            self.approximants,
            self.approximant_projs,
            self.meet_proj,
            self.dense_cert,
            self.projection,
            self.n0,
            self.N0_index,
        )
        fresh = {(s.name, s.witness): s.achieved for s in recomputed}
        devs = {}
        for s in self.steps:
            key = (s.name, s.witness)
            if key in fresh:
                devs[f"{s.name}{s.witness or ''}"] = abs(fresh[key] - s.achieved)
        return devs


def _assemble_records(
    maps: MapFamily,
    x: Operator,
    eps: float,
    approximants: Sequence[Operator],
    projs: Sequence[Projection],
    p_meet: Projection,
    dense_cert: ProjectionCertificate,
    f: Projection,
    n0: int,
    N0: int,
) -> list[StepRecord]:
    """Recompute the compressed bounds appearing in the assembly steps."""
    records = []
    m_count = len(maps)
    for n, (x_n, p_n) in enumerate(zip(approximants, projs), start=1):
        claimed = eps / 2.0 ** (n + 1)
        for m in range(m_count):
            val = compressed_norm(p_n, maps.at(m, x_n - x))
            records.append(StepRecord("uniform_control", claimed, val, (n, m)))
    x_n0 = approximants[n0 - 1]
    for m in range(m_count):
        records.append(
            StepRecord(
                "approximant_choice",
                eps / 3.0,
                compressed_norm(p_meet, maps.at(m, x_n0 - x)),
                (n0, m),
            )
        )
    dense_vals = maps.evaluate_all(x_n0)
    for i in range(N0, m_count):
        for j in range(i + 1, m_count):
            records.append(
                StepRecord(
                    "dense_cauchy",
                    eps / 3.0,
                    compressed_norm(dense_cert.projection, dense_vals[i] - dense_vals[j]),
                    (i, j),
                )
            )
    final_vals = maps.evaluate_all(x)
    for i in range(N0, m_count):
        for j in range(i + 1, m_count):
            records.append(
                StepRecord(
                    "final_bound",
                    eps,
                    compressed_norm(f, final_vals[i] - final_vals[j]),
                    (i, j),
                )
            )
    return records


def assemble_certificate(
    maps: MapFamily,
    x: Operator,
    eps: float,
    scheme: ApproximationScheme,
    oracle: ConditionOneOracle,
    certifier: Callable[[Operator, float], ProjectionCertificate],
    n_approx: int = 4,
) -> AssemblyCertificate:
    """Extend uniform smallness of pairwise map differences from a dense set.

    Steps, each verified on the finite index grid and recorded:

    1. approximants x_n with ||x_n - x|| < (eps/2^{n+1})^{2/alpha};
    2. oracle projections p_n compressing a_m(x_n - x) below eps/2^{n+1};
    3. p = meet p_n with tau(1-p) < C eps / 2;
    4. the first n0 whose compressed gaps under p sit below eps/3;
    5. a Cauchy certificate q for {a_m(x_{n0})} with budget eps/2, giving the
       horizon index N0 past which pairwise gaps are below eps/3;
    6. f = p ^ q with tau(1-f) < eps (C+1)/2 and pairwise compressed
       differences of a_m(x) below eps on the grid tail.

    Any failed bound raises :class:`AssemblyError` naming the step and the
    witness index.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if n_approx < 1:
        raise ValueError("need at least one approximant")
    steps: list[StepRecord] = []
    m_count = len(maps)

    approximants: list[Operator] = []
    projs: list[Projection] = []
    certs: list[ProjectionCertificate] = []
    for n in range(1, n_approx + 1):
        x_n, gap = scheme.make(x, n, eps)
        approximants.append(x_n)
        steps.append(StepRecord("approximant_gap", scheme.gap_bound(n, eps), gap, (n,)))
        cert_n = oracle(x_n - x, eps / 2.0 ** (n + 1))
        projs.append(cert_n.projection)
        certs.append(cert_n)
        claimed = eps / 2.0 ** (n + 1)
        for m in range(m_count):
            val = compressed_norm(cert_n.projection, maps.at(m, x_n - x))
            rec = StepRecord("uniform_control", claimed, val, (n, m))
            steps.append(rec)
            if not rec.ok:
                raise AssemblyError("uniform_control", (n, m), val, claimed)

    p_meet = meet_all(projs)
    p_budget = oracle.C * eps / 2.0
    steps.append(StepRecord("meet_budget", p_budget, p_meet.cotrace, None))
    if p_meet.cotrace > p_budget:
        raise AssemblyError("meet_budget", None, p_meet.cotrace, p_budget)

    n0 = None
    for n, x_n in enumerate(approximants, start=1):
        worst = max(
            compressed_norm(p_meet, maps.at(m, x_n - x)) for m in range(m_count)
        )
        if worst <= eps / 3.0:
            n0 = n
            for m in range(m_count):
                steps.append(
                    StepRecord(
                        "approximant_choice",
                        eps / 3.0,
                        compressed_norm(p_meet, maps.at(m, x_n - x)),
                        (n0, m),
                    )
                )
            break
    if n0 is None:
        raise AssemblyError("approximant_choice", None, worst, eps / 3.0)

    x_n0 = approximants[n0 - 1]
    dense_cert = certifier(x_n0, eps / 2.0)
    steps.append(StepRecord("dense_budget", eps / 2.0, dense_cert.cotrace, None))
    if dense_cert.cotrace > eps / 2.0:
        raise AssemblyError("dense_budget", None, dense_cert.cotrace, eps / 2.0)
    N0 = first_index_below(dense_cert, eps / 3.0)
    if N0 is None:
        worst = dense_cert.decay[0][1] if dense_cert.decay else math.inf
        raise AssemblyError("dense_cauchy", None, worst, eps / 3.0)
    dense_vals = maps.evaluate_all(x_n0)
    for i in range(N0, m_count):
        for j in range(i + 1, m_count):
            val = compressed_norm(dense_cert.projection, dense_vals[i] - dense_vals[j])
            rec = StepRecord("dense_cauchy", eps / 3.0, val, (i, j))
            steps.append(rec)
            if not rec.ok:
                raise AssemblyError("dense_cauchy", (i, j), val, eps / 3.0)

    f = proj_meet(p_meet, dense_cert.projection)
    f_budget = eps * (oracle.C + 1.0) / 2.0
    steps.append(StepRecord("final_budget", f_budget, f.cotrace, None))
    if f.cotrace > f_budget:
        raise AssemblyError("final_budget", None, f.cotrace, f_budget)

    final_vals = maps.evaluate_all(x)
    for i in range(N0, m_count):
        for j in range(i + 1, m_count):
            val = compressed_norm(f, final_vals[i] - final_vals[j])
            rec = StepRecord("final_bound", eps, val, (i, j))
            steps.append(rec)
            if not rec.ok:
                raise AssemblyError("final_bound", (i, j), val, eps)

    budget_spent = sum(c.cotrace for c in certs) + dense_cert.cotrace
    return AssemblyCertificate(
        projection=f,
        cotrace=f.cotrace,
        epsilon=eps,
        C=oracle.C,
        n0=n0,
        N0_index=N0,
        steps=steps,
        budget_spent=budget_spent,
        approximants=tuple(approximants),
        approximant_projs=tuple(projs),
        dense_cert=dense_cert,
        meet_proj=p_meet,
    )


def scheme_from_semigroup(
    sg: Semigroup,
    p: float,
    alpha: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
    k_cap: int = 2**40,
) -> ApproximationScheme:
    """Approximation scheme built from shrinking-window flow averages.

    x_n is the window average of x at scale 1/k(n); the continuity modulus of
    the flow picks a starting k and the gap is verified directly, doubling k
    until the target is met.  A modulus too flat to meet the target raises
    :class:`SchemeError` with the achieved gap.
    """
    alg = sg.algebra

    def generate(x: Operator, n: int, eps: float) -> Operator:
        target = (eps / 2.0 ** (n + 1)) ** (2.0 / alpha)
        probe = np.geomspace(1.0, 1e-12, 25)
        k = None
        for s, value in continuity_modulus(sg, x, p, probe):
            if value <= target / 4.0:
                k = max(1, math.ceil(1.0 / s))
                break
        if k is None:
            k = math.ceil(1.0 / probe[-1])
        gap = math.inf
        while k <= k_cap:
            x_k = dense_approximant(sg, x, k, quad)
            gap = pnorm(alg, x_k - x, p)
            if gap < target:
                return x_k
            k *= 2
        raise SchemeError(gap, target)

    return ApproximationScheme(generate=generate, norm_p=p, alpha=alpha)
