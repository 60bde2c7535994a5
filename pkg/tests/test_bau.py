import math

import numpy as np
import pytest

from ncerg import (
    Identity,
    MaximalParams,
    Operator,
    ScalarDecay,
    TracialAlgebra,
    UnitaryFlow,
    bau_cauchy_certify,
    cesaro_average,
    double_average_certificate,
    lp_limit_check,
    maximal_projection,
    measure_nbhd_witness,
    operator_from_dict,
    perturbation_transfer,
    random_positive,
    random_self_adjoint,
    trace,
)
from ncerg.algebra import random_operator
from ncerg.bau import (
    ScheduleExhaustedError,
    TransferPremiseError,
    first_index_below,
)


def phi(gamma, T):
    return (1.0 - math.exp(-gamma * T)) / (gamma * T)


# ---------------------------------------------------------------------------
# measure-topology witness
# ---------------------------------------------------------------------------

def test_witness_zero_operator(alg):
    out = measure_nbhd_witness(alg.zero(), 0.5, 0.1)
    assert out.ok
    assert out.certificate.cotrace == 0.0
    assert out.certificate.achieved_bound == 0.0
    assert (out.certificate.projection.op - alg.identity()).norm_inf() < 1e-12


def test_witness_diagonal_threshold():
    alg = TracialAlgebra((2,), (1.0,))
    x = Operator(alg, [np.diag([10.0 + 0j, 0.1])])
    ok = measure_nbhd_witness(x, 1.0, 1.0)
    assert ok.ok and ok.certificate.cotrace == pytest.approx(1.0)
    np.testing.assert_allclose(
        ok.certificate.projection.op.blocks[0], np.diag([0.0, 1.0]), atol=1e-12
    )
    bad = measure_nbhd_witness(x, 0.5, 1.0)
    assert not bad.ok
    assert bad.min_achievable_cotrace == pytest.approx(1.0)


def test_witness_agrees_with_brute_force(alg, rng):
    for _ in range(12):
        x = random_operator(alg, rng)
        gram = x.H @ x
        eigs = np.concatenate(
            [np.linalg.eigvalsh((b + b.conj().T) / 2) for b in gram.blocks]
        )
        weights = np.concatenate(
            [np.full(n, c) for n, c in zip(alg.blocks, alg.weights)]
        )
        order = np.argsort(eigs)
        eigs, weights = eigs[order], weights[order]
        delta = float(rng.uniform(0.1, 1.0))
        epsilon = float(rng.uniform(0.1, 1.5))
        # brute force over every spectral cut point of x*x
        best = None
        for cut in range(len(eigs) + 1):
            included_max = eigs[cut - 1] if cut else 0.0
            if included_max <= delta**2 + 1e-12:
                cot = weights[cut:].sum()
                best = cot if best is None else min(best, cot)
        expected_ok = best is not None and best <= epsilon + 1e-12
        got = measure_nbhd_witness(x, epsilon, delta)
        assert got.ok == expected_ok
        if got.ok:
            assert got.certificate.achieved_bound <= delta + 1e-10
            assert got.certificate.cotrace == pytest.approx(best, abs=1e-12)


# ---------------------------------------------------------------------------
# maximal projection
# ---------------------------------------------------------------------------

def test_maximal_zero_operator(alg):
    cert = maximal_projection(
        Identity(alg), alg.zero(), MaximalParams(1.0, 1.0, 0.3), [1.0, 0.5]
    )
    assert cert.cotrace == 0.0
    assert cert.achieved_bound == 0.0


def test_maximal_scalar_decay_diagonal():
    alg = TracialAlgebra((2,), (0.8,))
    sg = ScalarDecay(alg, 1.0)
    x = Operator(alg, [np.diag([10.0 + 0j, 0.001])])
    grid = np.geomspace(1e-3, 10.0, 16)
    cert = maximal_projection(sg, x, MaximalParams(1.0, 1.0, 0.5), grid)
    # the large coordinate survives every average on this grid, the small
    # one never crosses the level
    assert cert.cotrace == pytest.approx(0.8)
    np.testing.assert_allclose(
        cert.projection.op.blocks[0], np.diag([0.0, 1.0]), atol=1e-10
    )
    assert cert.achieved_bound <= 0.5 + 1e-10


def test_maximal_per_grid_chebyshev_rows(alg, rng):
    sg = UnitaryFlow(alg, random_self_adjoint(alg, rng, norm=1.0))
    x = random_self_adjoint(alg, rng, norm=1.0)
    p = 2.0
    eps = 0.3
    grid = np.geomspace(1e-2, 5.0, 8)
    cert = maximal_projection(sg, x, MaximalParams(1.0, p, eps), grid)
    for T, cot, bound in cert.params["chebyshev"]:
        # oracle: recompute the bound from the eigenvalues of the average
        y = cesaro_average(sg, x, float(T))
        eigs = np.concatenate(
            [np.linalg.eigvalsh((b + b.conj().T) / 2) for b in y.blocks]
        )
        indep = float((np.abs(eigs) ** p * np.repeat(alg.weights, alg.blocks)).sum())
        assert bound == pytest.approx(indep / eps**p, rel=1e-9)
        assert cot <= bound + 1e-9


def test_maximal_bound_and_self_verification(alg, rng):
    sg = ScalarDecay(alg, 0.7)
    x = random_self_adjoint(alg, rng, norm=1.0)
    grid = np.geomspace(1e-4, 10.0, 24)
    cert = maximal_projection(sg, x, MaximalParams(1.0, 1.0, 0.25), grid)
    assert cert.achieved_bound <= 0.25 + 1e-8
    assert abs(cert.recompute_bound() - cert.achieved_bound) < 1e-10
    assert cert.cotrace == pytest.approx(
        (trace(alg, alg.identity()) - trace(alg, cert.projection.op)).real, abs=1e-12
    )


def test_maximal_requires_self_adjoint(alg, rng):
    with pytest.raises(ValueError):
        maximal_projection(
            Identity(alg),
            random_operator(alg, rng) + 1j * alg.identity(),
            MaximalParams(1.0, 1.0, 0.3),
            [1.0],
        )


# ---------------------------------------------------------------------------
# shrinking-window certificate
# ---------------------------------------------------------------------------

def test_window_certificate_identity_flow(alg, rng):
    x = random_positive(alg, rng, norm=1.0)
    sched = np.geomspace(0.25, 1e-6, 16)
    cert = double_average_certificate(
        Identity(alg), x, b=1.0, p=1.0, epsilon=0.3, a_schedule=sched
    )
    assert cert.ok
    assert cert.cotrace < 0.3
    assert all(d < 1e-12 for _, d in cert.decay)


def test_window_certificate_levels_are_geometric(alg, rng):
    x = random_positive(alg, rng, norm=1.0)
    sched = np.geomspace(0.25, 1e-7, 20)
    eps = 0.3
    cert = double_average_certificate(
        ScalarDecay(alg, 1.0), x, b=1.0, p=1.0, epsilon=eps, a_schedule=sched
    )
    head_budget = 0.0
    for tag, k, a_k, tr, level, cot in cert.params["levels"]:
        assert level == eps / 2.0 ** (k + 1)
        assert tr < eps**2 / 4.0**k
        assert cot <= level + 1e-12
        if tag == "head":
            head_budget += eps / 2.0 ** (k + 1)
    assert cert.params["head_cotrace"] <= head_budget + 1e-12
    assert cert.cotrace < eps


def test_window_certificate_scalar_decay_closed_form(alg, rng):
    gamma = 1.0
    sg = ScalarDecay(alg, gamma)
    x = random_positive(alg, rng, norm=1.0)
    b = 1.0
    sched = np.geomspace(0.25, 1e-7, 20)
    cert = double_average_certificate(
        sg, x, b=b, p=1.0, epsilon=0.3, a_schedule=sched
    )
    exe = (cert.projection.op @ x @ cert.projection.op).norm_inf()
    # absolute floor: the difference of two O(1) averages carries the
    # quadrature's absolute roundoff even when the gap itself is tiny
    for a, d in cert.decay:
        expected = abs(phi(gamma, a) - 1.0) * phi(gamma, b) * exe
        assert d == pytest.approx(expected, rel=1e-5, abs=1e-9)
    assert cert.params["final_decay"] < 1e-6


def test_window_certificate_schedule_exhaustion(alg, rng):
    x = random_positive(alg, rng, norm=1.0)
    with pytest.raises(ScheduleExhaustedError):
        double_average_certificate(
            ScalarDecay(alg, 1.0),
            x,
            b=1.0,
            p=1.0,
            epsilon=0.3,
            a_schedule=[0.5, 0.4],
            levels=6,
        )


def test_window_certificate_needs_positive(alg, rng):
    with pytest.raises(ValueError):
        double_average_certificate(
            Identity(alg),
            random_self_adjoint(alg, rng) - alg.identity(),
            b=1.0,
            p=1.0,
            epsilon=0.3,
            a_schedule=[0.1, 0.01],
        )


# ---------------------------------------------------------------------------
# Cauchy certification
# ---------------------------------------------------------------------------

def test_cauchy_constant_family(alg, rng):
    x = random_self_adjoint(alg, rng)
    fam = [(T, x) for T in (1.0, 0.5, 0.25, 0.125)]
    cert = bau_cauchy_certify(fam, epsilon=0.5)
    assert cert.ok
    assert cert.cotrace == 0.0
    assert all(d == 0.0 for _, d in cert.decay)


def test_cauchy_linear_family_analytic_bound(alg, rng):
    x = random_self_adjoint(alg, rng, norm=1.0)
    Ts = [2.0**-k for k in range(10)]
    fam = [(T, (1.0 + T) * x) for T in Ts]
    cert = bau_cauchy_certify(fam, epsilon=0.5, tol=1e-2)
    for delta, d in cert.decay:
        assert d <= 2.0 * delta * x.norm_inf() + 1e-12


def test_cauchy_cesaro_family_cross_check(alg, rng):
    sg = UnitaryFlow(alg, random_self_adjoint(alg, rng, norm=1.0))
    x = random_self_adjoint(alg, rng, norm=1.0)
    Ts = [2.0**-k for k in range(12)]
    fam = [(T, cesaro_average(sg, x, T)) for T in Ts]
    cert = bau_cauchy_certify(
        fam, epsilon=0.1 * alg.trace_of_identity, tol=1e-3
    )
    assert cert.ok
    assert cert.cotrace <= 0.1 * alg.trace_of_identity
    # decay is suffix-max, hence nonincreasing, and dominated by 2 max ||b_T x - x||
    values = [d for _, d in cert.decay]
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))
    for delta, d in cert.decay:
        dominating = 2.0 * max(
            (y - x).norm_inf() for T, y in fam if T <= delta + 1e-15
        )
        assert d <= dominating + 1e-10
    assert abs(cert.recompute_bound() - cert.achieved_bound) < 1e-10


def test_cauchy_rejects_bad_grid(alg, rng):
    x = random_self_adjoint(alg, rng)
    with pytest.raises(ValueError):
        bau_cauchy_certify([(0.5, x), (1.0, x)], epsilon=0.5)


def test_cauchy_detects_nonconvergent_family(alg, rng):
    x = random_self_adjoint(alg, rng, norm=1.0)
    y = random_self_adjoint(alg, rng, norm=1.0)
    fam = [(T, x if i % 2 else y) for i, T in enumerate([2.0**-k for k in range(8)])]
    cert = bau_cauchy_certify(fam, epsilon=1e-6, tol=1e-6)
    assert not cert.ok
    assert "final compressed gap above tolerance" in cert.flags


# ---------------------------------------------------------------------------
# perturbation transfer
# ---------------------------------------------------------------------------

def _cesaro_family(sg, x, Ts):
    return [(T, cesaro_average(sg, x, T)) for T in Ts]


def test_transfer_identical_families(alg, rng):
    sg = ScalarDecay(alg, 1.0)
    x = random_self_adjoint(alg, rng, norm=1.0)
    Ts = [2.0**-k for k in range(8)]
    base = _cesaro_family(sg, x, Ts)
    cert = bau_cauchy_certify(base, epsilon=0.5, tol=1e-2)
    moved = perturbation_transfer(base, base, cert, [1e-9])
    assert moved.ok
    assert moved.params["max_gap"] == 0.0
    assert moved.achieved_bound <= moved.params["predicted_bound"]


def test_transfer_scalar_shift(alg, rng):
    # shifting by delta * 1 moves each compressed element by exactly delta
    # and leaves pairwise differences untouched
    sg = ScalarDecay(alg, 1.0)
    x = random_positive(alg, rng, norm=1.0)
    Ts = [2.0**-k for k in range(8)]
    base = _cesaro_family(sg, x, Ts)
    delta = 0.05
    tilde = [(T, y + delta * alg.identity()) for T, y in base]
    cert = bau_cauchy_certify(base, epsilon=0.5, tol=1e-2)
    moved = perturbation_transfer(tilde, base, cert, [delta * 1.5])
    assert moved.params["max_gap"] == pytest.approx(delta, abs=1e-12)
    # pairwise gaps are unchanged by the shift, compressed sups move by delta
    assert moved.achieved_bound == pytest.approx(
        moved.params["base_tail_bound"], abs=1e-10
    )
    assert moved.params["tilde_sup"] - moved.params["base_sup"] == pytest.approx(
        delta, abs=1e-10
    )


def test_transfer_premise_violation(alg, rng):
    sg = ScalarDecay(alg, 1.0)
    x = random_self_adjoint(alg, rng, norm=1.0)
    Ts = [2.0**-k for k in range(6)]
    base = _cesaro_family(sg, x, Ts)
    tilde = [(T, y + alg.identity()) for T, y in base]
    cert = bau_cauchy_certify(base, epsilon=0.5, tol=1e-2)
    with pytest.raises(TransferPremiseError) as err:
        perturbation_transfer(tilde, base, cert, [0.5])
    assert err.value.worst_gap == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# limit norm check
# ---------------------------------------------------------------------------

def test_lp_limit_constant_family(alg, rng):
    x = random_self_adjoint(alg, rng)
    fam = [(T, x) for T in (1.0, 0.5, 0.25)]
    rep = lp_limit_check(fam, 2.0, x)
    assert rep.passed
    assert rep.limit_norm == pytest.approx(rep.liminf_norm)


def test_lp_limit_shrinking_family(alg, rng):
    x = random_self_adjoint(alg, rng)
    fam = [(T, (1.0 + T) * x) for T in (1.0, 0.5, 0.25, 0.125)]
    assert lp_limit_check(fam, 1.0, x).passed
    assert not lp_limit_check(fam, 1.0, 2.0 * x).passed


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_certificate_json_schema(alg, rng):
    sg = ScalarDecay(alg, 1.0)
    x = random_self_adjoint(alg, rng, norm=1.0)
    cert = maximal_projection(
        sg, x, MaximalParams(1.0, 1.0, 0.3), np.geomspace(1e-3, 2.0, 6)
    )
    data = cert.to_json_dict()
    for key in ("cotrace", "epsilon", "achieved_bound", "grid", "projection", "flags"):
        assert key in data
    back = operator_from_dict(data["projection"])
    assert (back - cert.projection.op).norm_inf() < 1e-12


def test_certificates_are_self_verifying(alg, rng):
    # every family-carrying certificate reproduces its stored bound
    sg = UnitaryFlow(alg, random_self_adjoint(alg, rng, norm=1.0))
    x = random_self_adjoint(alg, rng, norm=1.0)
    x_pos = random_positive(alg, rng, norm=1.0)
    fam = _cesaro_family(sg, x, [2.0**-k for k in range(8)])
    certs = [
        maximal_projection(
            sg, x, MaximalParams(1.0, 1.0, 0.3), np.geomspace(1e-3, 2.0, 8)
        ),
        bau_cauchy_certify(fam, epsilon=0.5, tol=1e-2),
        double_average_certificate(
            sg, x_pos, b=1.0, p=1.0, epsilon=0.3,
            a_schedule=np.geomspace(0.25, 1e-6, 14),
        ),
        measure_nbhd_witness(x, alg.trace_of_identity, 0.5).certificate,
        perturbation_transfer(
            fam, fam, bau_cauchy_certify(fam, epsilon=0.5, tol=1e-2), [1e-6]
        ),
    ]
    for cert in certs:
        assert abs(cert.recompute_bound() - cert.achieved_bound) < 1e-10, cert.family


def test_first_index_below(alg, rng):
    sg = ScalarDecay(alg, 1.0)
    x = random_self_adjoint(alg, rng, norm=1.0)
    fam = _cesaro_family(sg, x, [2.0**-k for k in range(10)])
    cert = bau_cauchy_certify(fam, epsilon=0.5, tol=1e-2)
    idx = first_index_below(cert, 1e-2)
    assert idx is not None
    assert cert.decay[idx][1] <= 1e-2
    if idx > 0:
        assert cert.decay[idx - 1][1] > 1e-2
