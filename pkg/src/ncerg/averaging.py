"""Quadrature engine for flow averages and almost-periodic weights.

The central object is the time average ``(1/T) * integral_0^T w(t) a_t(x) dt``
for a semigroup ``a_t``, an operator ``x`` and a bounded scalar weight ``w``.
Integrals use composite Gauss-Legendre panels whose count doubles until the
difference between successive refinements drops below a relative tolerance,
measured in the operator norm.  Smooth integrands (matrix exponentials times
trigonometric weights) converge spectrally, so a couple of refinements
normally suffice; weight values are taken exactly at the quadrature nodes,
never interpolated.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .algebra import Operator, min_eig
from .config import DEFAULT_TOLS
from .semigroups import Semigroup

__all__ = [
    "QuadratureConfig",
    "QuadratureError",
    "QuadratureResult",
    "DEFAULT_QUAD",
    "integrate_flow",
    "integrate_scalar",
    "cesaro_average",
    "weighted_average",
    "trig_average",
    "oscillatory_average",
    "dense_approximant",
    "sandwich_check",
    "TrigTerm",
    "trig_value",
    "BesicovitchWeight",
    "besicovitch_error",
    "substitution_bound_check",
    "residual_from_config",
    "weight_from_config",
]


@dataclass(frozen=True)
class QuadratureConfig:
    """Composite Gauss-Legendre settings.

    ``panels_per_unit`` fixes the starting panel count per unit length (at
    least one panel is always used), ``refine_factor`` multiplies the panel
    count per refinement, and refinement stops once the relative change
    between passes is below ``rtol`` or ``max_refinements`` is exhausted.
    """

    panels_per_unit: float = 1.0
    nodes_per_panel: int = 8
    refine_factor: int = 2
    rtol: float = 1e-10
    max_refinements: int = 12

    def __post_init__(self) -> None:
        if self.rtol <= 0:
            raise ValueError("quadrature tolerance must be > 0")
        if self.nodes_per_panel < 2 or self.panels_per_unit <= 0:
            raise ValueError("need >= 2 nodes per panel and > 0 panels per unit")
        if self.refine_factor < 2:
            raise ValueError("refine factor must be >= 2")


DEFAULT_QUAD = QuadratureConfig()


class QuadratureError(RuntimeError):
    """Refinement budget exhausted before reaching the requested tolerance."""

    def __init__(self, achieved: float, target: float, refinements: int):
        super().__init__(
            f"quadrature did not converge: achieved {achieved:.3e} "
            f"(target {target:.3e}) after {refinements} refinements"
        )
        self.achieved = achieved
        self.target = target
        self.refinements = refinements


@dataclass(frozen=True)
class QuadratureResult:
    value: Operator
    error: float
    refinements: int
    converged: bool


@lru_cache(maxsize=None)
def _gl_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _panel_points(lo: float, hi: float, panels: int, order: int):
    x, w = _gl_nodes(order)
    edges = np.linspace(lo, hi, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    ts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    return ts, ws


def integrate_flow(
    sg: Semigroup,
    x: Operator,
    lo: float,
    hi: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
    weight: Callable[[np.ndarray], np.ndarray] | None = None,
    strict: bool = True,
) -> QuadratureResult:
    """integral_lo^hi w(t) a_t(x) dt with doubling Gauss-Legendre panels."""
    if not hi > lo:
        raise ValueError("integration interval must have hi > lo")
    panels = max(1, math.ceil(quad.panels_per_unit * (hi - lo)))
    prev = None
    err = math.inf
    level = 0
    for level in range(quad.max_refinements + 1):
        ts, ws = _panel_points(lo, hi, panels, quad.nodes_per_panel)
        if weight is None:
            cw = ws.astype(complex)
        else:
            cw = ws * np.asarray(weight(ts), dtype=complex)
        stacks = sg.propagate_stack(ts, x)
        blocks = [np.einsum("t,tij->ij", cw, s) for s in stacks]
        cur = Operator(sg.algebra, blocks)
        if prev is not None:
            scale = max(cur.norm_inf(), 1e-300)
            err = (cur - prev).norm_inf() / scale
            if err <= quad.rtol:
                return QuadratureResult(cur, err, level, True)
        prev = cur
        panels *= quad.refine_factor
    if strict:
        raise QuadratureError(err, quad.rtol, level)
    return QuadratureResult(prev, err, level, False)


def integrate_scalar(
    f: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> tuple[float, float]:
    """Best-effort scalar integral; returns (value, error estimate)."""
    if not hi > lo:
        raise ValueError("integration interval must have hi > lo")
    panels = max(1, math.ceil(quad.panels_per_unit * (hi - lo)))
    prev = None
    err = math.inf
    for _ in range(quad.max_refinements + 1):
        ts, ws = _panel_points(lo, hi, panels, quad.nodes_per_panel)
        cur = float(np.real_if_close(np.dot(ws, np.asarray(f(ts)))).real)
        if prev is not None:
            err = abs(cur - prev) / max(abs(cur), 1e-300)
            if err <= quad.rtol:
                return cur, err
        prev = cur
        panels *= quad.refine_factor
    return prev, err


# ---------------------------------------------------------------------------
# averages
# ---------------------------------------------------------------------------

def cesaro_average(
    sg: Semigroup,
    x: Operator,
    T: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
    strict: bool = True,
) -> Operator:
    """Time average (1/T) integral_0^T a_t(x) dt, T > 0."""
    if not T > 0:
        raise ValueError("averaging length T must be > 0")
    res = integrate_flow(sg, x, 0.0, T, quad, strict=strict)
    return res.value / T


def weighted_average(
    sg: Semigroup,
    b: "BesicovitchWeight",
    x: Operator,
    T: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
    strict: bool = True,
) -> Operator:
    """(1/T) integral_0^T b(t) a_t(x) dt for a bounded weight b."""
    if not T > 0:
        raise ValueError("averaging length T must be > 0")
    res = integrate_flow(sg, x, 0.0, T, quad, weight=b.value, strict=strict)
    return res.value / T


def trig_average(
    sg: Semigroup,
    terms: Sequence["TrigTerm"],
    x: Operator,
    T: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
    strict: bool = True,
) -> Operator:
    """Average weighted by the trigonometric polynomial alone."""
    terms = tuple(terms)
    return weighted_average(sg, BesicovitchWeight(terms), x, T, quad, strict=strict)


def oscillatory_average(
    sg: Semigroup,
    lam: complex,
    x: Operator,
    T: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
    strict: bool = True,
) -> Operator:
    """(1/T) integral_0^T lam^t a_t(x) dt for unit-modulus lam.

    ``lam^t`` uses the principal logarithm; lam = -1 runs along exp(i pi t).
    Any fixed branch gives a valid unit-modulus weight, this one is pinned for
    reproducibility.
    """
    if abs(abs(lam) - 1.0) > 1e-12:
        raise ValueError("oscillation parameter must have modulus one")
    log_lam = cmath.log(lam)

    def weight(ts: np.ndarray) -> np.ndarray:
        return np.exp(ts * log_lam)

    if not T > 0:
        raise ValueError("averaging length T must be > 0")
    res = integrate_flow(sg, x, 0.0, T, quad, weight=weight, strict=strict)
    return res.value / T


def dense_approximant(
    sg: Semigroup,
    x: Operator,
    k: int,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> Operator:
    """k * integral_0^{1/k} a_s(x) ds, the mollified copy of x at scale 1/k."""
    if int(k) != k or k < 1:
        raise ValueError("approximant index k must be a positive integer")
    return cesaro_average(sg, x, 1.0 / int(k), quad)


def sandwich_check(
    sg: Semigroup,
    x: Operator,
    a: float,
    b: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
    tol: float = DEFAULT_TOLS.positivity,
) -> tuple[float, float]:
    """Two-sided bound on the double average of a positive operator.

    For positive x the difference D = beta_a(beta_b(x)) - beta_b(x) sits
    between -(1/b) integral_0^a a_s(x) ds and (1/b) integral_b^{b+a} a_s(x) ds.
    Returns (min eig of D - lower, min eig of upper - D); both should be
    >= -tol up to quadrature error.
    """
    if not (a > 0 and b > 0):
        raise ValueError("window lengths must be positive")
    if not x.is_positive(tol=max(tol, 1e-8)):
        raise ValueError("sandwich check needs a positive operator")
    beta_b = cesaro_average(sg, x, b, quad)
    delta = cesaro_average(sg, beta_b, a, quad) - beta_b
    head = integrate_flow(sg, x, 0.0, a, quad).value / b
    tail = integrate_flow(sg, x, b, b + a, quad).value / b
    lower_slack = min_eig((delta + head).herm())
    upper_slack = min_eig((tail - delta).herm())
    return lower_slack, upper_slack


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrigTerm:
    """One term kappa * exp(2 pi i theta t)."""

    kappa: complex
    theta: float


def trig_value(terms: Sequence[TrigTerm], ts: np.ndarray) -> np.ndarray:
    ts = np.asarray(ts, dtype=float)
    out = np.zeros(ts.shape, dtype=complex)
    for term in terms:
        out += term.kappa * np.exp(2j * math.pi * term.theta * ts)
    return out


@dataclass(frozen=True)
class BesicovitchWeight:
    """Trigonometric polynomial plus a bounded residual.

    ``value(t) = sum_j kappa_j exp(2 pi i theta_j t) + residual(t)``.  The
    residual callable must accept numpy arrays and stay below
    ``residual_sup`` in modulus; ``sup_bound`` is the declared bound on the
    whole weight (defaults to sum |kappa_j| + residual_sup).
    """

    terms: tuple[TrigTerm, ...]
    residual: Callable[[np.ndarray], np.ndarray] | None = None
    residual_sup: float = 0.0
    sup_bound: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.residual is None and self.residual_sup != 0.0:
            raise ValueError("residual_sup without a residual")
        if self.sup_bound is None:
            bound = sum(abs(t.kappa) for t in self.terms) + self.residual_sup
            object.__setattr__(self, "sup_bound", float(bound))

    @classmethod
    def constant(cls, value: complex) -> "BesicovitchWeight":
        return cls((TrigTerm(complex(value), 0.0),))

    def trig_part(self, ts: np.ndarray) -> np.ndarray:
        return trig_value(self.terms, ts)

    def value(self, ts: np.ndarray) -> np.ndarray:
        out = self.trig_part(ts)
        if self.residual is not None:
            out = out + np.asarray(self.residual(np.asarray(ts, dtype=float)), dtype=complex)
        return out

    def sup_violation(self, ts: np.ndarray) -> float:
        """max sampled |b(t)| minus the declared bound (negative when fine)."""
        return float(np.max(np.abs(self.value(ts))) - self.sup_bound)

    def conjugated(self) -> "BesicovitchWeight":
        terms = tuple(TrigTerm(t.kappa.conjugate(), -t.theta) for t in self.terms)
        res = None
        if self.residual is not None:
            orig = self.residual
            res = lambda ts: np.conj(orig(ts))
        return BesicovitchWeight(terms, res, self.residual_sup, self.sup_bound)

    def real_part(self) -> "BesicovitchWeight":
        terms = []
        for t in self.terms:
            terms.append(TrigTerm(0.5 * t.kappa, t.theta))
            terms.append(TrigTerm(0.5 * t.kappa.conjugate(), -t.theta))
        res = None
        if self.residual is not None:
            orig = self.residual
            res = lambda ts: np.asarray(orig(ts)).real.astype(complex)
        return BesicovitchWeight(tuple(terms), res, self.residual_sup, self.sup_bound)

    def imag_part(self) -> "BesicovitchWeight":
        terms = []
        for t in self.terms:
            terms.append(TrigTerm(-0.5j * t.kappa, t.theta))
            terms.append(TrigTerm((-0.5j * t.kappa).conjugate(), -t.theta))
        res = None
        if self.residual is not None:
            orig = self.residual
            res = lambda ts: np.asarray(orig(ts)).imag.astype(complex)
        return BesicovitchWeight(tuple(terms), res, self.residual_sup, self.sup_bound)


@dataclass(frozen=True)
class BesicovitchErrorTable:
    """Local mean errors (1/T) integral_0^T |b - P| dt over a shrinking grid."""

    rows: tuple[tuple[float, float], ...]
    tail_sup: float


def besicovitch_error(
    b: BesicovitchWeight,
    T_grid: Sequence[float],
    quad: QuadratureConfig = DEFAULT_QUAD,
    trig_terms: Sequence[TrigTerm] | None = None,
) -> BesicovitchErrorTable:
    """Local mean gap between a weight and a trigonometric polynomial.

    ``T_grid`` must decrease toward zero; the tail supremum over the final
    quarter of the grid stands in for the limit superior at zero and is
    reported next to the full table so the approach to zero can be judged.
    """
    grid = [float(T) for T in T_grid]
    if any(t2 >= t1 for t1, t2 in zip(grid, grid[1:])) or any(t <= 0 for t in grid):
        raise ValueError("T_grid must be positive and strictly decreasing")
    terms = tuple(trig_terms) if trig_terms is not None else b.terms

    def gap(ts: np.ndarray) -> np.ndarray:
        return np.abs(b.value(ts) - trig_value(terms, ts))

    rows = []
    for T in grid:
        val, _ = integrate_scalar(gap, 0.0, T, quad)
        rows.append((T, val / T))
    tail = rows[-max(1, len(rows) // 4):]
    return BesicovitchErrorTable(tuple(rows), max(v for _, v in tail))


def substitution_bound_check(
    sg: Semigroup,
    b: BesicovitchWeight,
    x: Operator,
    T: float,
    quad: QuadratureConfig = DEFAULT_QUAD,
    trig_terms: Sequence[TrigTerm] | None = None,
    positivity_tol: float = 1e-8,
) -> tuple[float, float]:
    """Compare the weighted average against its trigonometric substitute.

    Returns (lhs, rhs) where lhs is the operator-norm distance between the
    b-weighted and P-weighted averages of a positive bounded x, and
    rhs = 2 * ((1/T) integral_0^T |P - b|) * ||x||.  The factor two absorbs
    the norm growth of the extended flow on non-self-adjoint parts; the
    contract is lhs <= rhs up to quadrature error.
    """
    if not x.is_positive(tol=positivity_tol):
        raise ValueError("substitution bound needs a positive operator")
    terms = tuple(trig_terms) if trig_terms is not None else b.terms
    lhs_op = weighted_average(sg, b, x, T, quad) - trig_average(sg, terms, x, T, quad)
    lhs = lhs_op.norm_inf()

    def gap(ts: np.ndarray) -> np.ndarray:
        return np.abs(trig_value(terms, ts) - b.value(ts))

    mean_gap, _ = integrate_scalar(gap, 0.0, T, quad)
    rhs = 2.0 * (mean_gap / T) * x.norm_inf()
    return lhs, rhs


# ---------------------------------------------------------------------------
# weight config loading
# ---------------------------------------------------------------------------

def residual_from_config(spec: dict | None) -> tuple[Callable | None, float]:
    """Named built-in residuals: none, constant, cos, sin_inv_t, linear_capped."""
    if spec is None or spec.get("name", "none") == "none":
        return None, 0.0
    name = spec["name"]
    if name == "constant":
        value = complex(spec.get("value", 0.0))
        return (lambda ts: np.full(np.shape(ts), value)), abs(value)
    if name == "cos":
        amp = float(spec.get("amplitude", 0.1))
        freq = float(spec.get("frequency", 1.0))
        return (lambda ts: amp * np.cos(freq * np.asarray(ts))), abs(amp)
    if name == "sin_inv_t":
        amp = float(spec.get("amplitude", 0.1))

        def res(ts):
            ts = np.asarray(ts, dtype=float)
            out = np.zeros_like(ts)
            nz = ts > 0
            out[nz] = amp * np.sin(1.0 / ts[nz])
            return out

        return res, abs(amp)
    if name == "linear_capped":
        slope = float(spec.get("slope", 1.0))
        cap = float(spec.get("cap", 1.0))
        return (lambda ts: np.minimum(slope * np.asarray(ts, dtype=float), cap)), abs(cap)
    raise ValueError(f"unknown residual: {name!r}")


def weight_from_config(spec: dict) -> BesicovitchWeight:
    terms = tuple(
        TrigTerm(complex(t.get("kappa_re", 0.0), t.get("kappa_im", 0.0)), float(t["theta"]))
        for t in spec.get("trig", [])
    )
    residual, res_sup = residual_from_config(spec.get("residual"))
    sup_bound = spec.get("sup_bound")
    return BesicovitchWeight(
        terms,
        residual,
        res_sup,
        float(sup_bound) if sup_bound is not None else None,
    )
