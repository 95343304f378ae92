from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockband.bandmat import PeriodicBlockBandMatrix, generate
from blockband.oracles import (LemmaCheckResult, azuma_constant, azuma_moment_check, combine,
                               diagonal_resolvent_symmetry_check, quadratic_form_moment_check,
                               quadratic_form_second_moment, rademacher_walk_moment,
                               rank_perturbation_partial_trace_check, run_quadratic_form, run_rank_perturbation,
                               run_sherman_morrison, run_trace_perturbation, run_zeta_m,
                               sherman_morrison_check, trace_perturbation_check, zeta_m_identity_check)


def test_result_pass_rule_and_merge():
    a = LemmaCheckResult("x", 2, -0.1, 0.0)
    b = LemmaCheckResult("x", 3, 0.2, 0.0)
    assert a.passed and not b.passed
    c = combine([a, b])
    assert c.instances == 5 and c.max_violation == 0.2 and not c.passed
    with pytest.raises(ValueError):
        a.merge(LemmaCheckResult("y", 1, 0, 0))
    assert a.to_dict()["passed"] is True


def test_sherman_morrison_examples():
    e1 = np.zeros(4)
    e1[0] = 1
    r = sherman_morrison_check(np.eye(4), e1)
    assert np.allclose(r.details["lhs"], e1 / 2) and np.allclose(r.details["rhs"], e1 / 2)
    r0 = sherman_morrison_check(np.eye(3), np.zeros(3))
    assert np.allclose(r0.details["lhs"], 0) and r0.passed
    batch = run_sherman_morrison(200, 0)
    assert batch.instances == 200 and batch.max_violation < 1e-10


def test_trace_perturbation_examples():
    assert trace_perturbation_check(np.eye(3), np.zeros(3), 1j).details["lhs"] == 0.0
    e1 = np.zeros(3)
    e1[0] = 1
    r = trace_perturbation_check(np.zeros((3, 3)), e1, 1j)
    assert r.details["lhs"] == pytest.approx(math.sqrt(2) / 2, abs=1e-14)
    assert r.passed
    with pytest.raises(ValueError):
        trace_perturbation_check(np.eye(2), np.ones(2), 1.0)
    batch = run_trace_perturbation(1000, 1)
    assert batch.passed and batch.instances == 1000


def test_quadratic_form_diagonal_rademacher_is_zero():
    A = np.diag([1.0, -2.0, 3.0])
    r = quadratic_form_moment_check("rademacher", A, [0, 1, 2], 2, 10 ** 4, 0)
    assert r.details["estimate"] == 0.0 and r.details["exact"] == 0.0 and r.passed


def test_quadratic_form_exact_second_moment_by_expansion():
    A = np.zeros((2, 2))
    A[0, 1] = A[1, 0] = 1
    # v*Av = 2 xi_1 xi_2 for real atoms, so E|.|^2 = 4 E[xi_1^2] E[xi_2^2] = 4
    assert quadratic_form_second_moment(A, [0, 1], "gaussian-real") == pytest.approx(4.0)
    # complex circular atoms: xi1* xi2 + xi2* xi1 = 2 Re(xi1* xi2), E = 2
    assert quadratic_form_second_moment(A, [0, 1], "gaussian-complex") == pytest.approx(2.0)
    r = quadratic_form_moment_check("gaussian-real", A, [0, 1], 2, 10 ** 5, 3)
    assert r.passed
    assert abs(r.details["estimate"] - 4.0) <= 5 * r.details["standard_error"]


def test_quadratic_form_second_moment_matches_brute_force_expectation():
    # rademacher: enumerate all sign patterns exactly
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    idx = [0, 2, 3]
    B = A[np.ix_(idx, idx)]
    vals = []
    for bits in range(8):
        xi = np.array([1 if bits >> k & 1 else -1 for k in range(3)], dtype=float)
        vals.append(abs(xi @ B @ xi - np.trace(B)) ** 2)
    assert quadratic_form_second_moment(A, idx, "rademacher") == pytest.approx(np.mean(vals), rel=1e-12)


def test_quadratic_form_bound_over_random_instances():
    res = run_quadratic_form(100, 4)
    assert res.instances == 100 and res.passed


def test_quadratic_form_preconditions():
    with pytest.raises(ValueError):
        quadratic_form_moment_check("rademacher", np.eye(2), [0], 3, 10 ** 4, 0)
    with pytest.raises(ValueError):
        quadratic_form_moment_check("rademacher", np.eye(2), [0], 2, 100, 0)


def test_rank_perturbation_examples():
    rng = np.random.default_rng(1)
    B = rng.standard_normal((6, 6))
    P = B @ B.T
    r = rank_perturbation_partial_trace_check(P, P, 1 + 1j, [0, 1])
    assert r.details["lhs"] == 0.0 and r.details["rank"] == 0
    v = rng.standard_normal(6)
    rq = rank_perturbation_partial_trace_check(P, P + np.outer(v, v), 0.5j, range(6))
    rt = trace_perturbation_check(P, v, 0.5j)
    assert rq.details["rank"] == 1
    assert rq.details["lhs"] == pytest.approx(rt.details["lhs"], rel=1e-10)
    assert rq.details["bound"] == pytest.approx(2 * rt.details["bound"])
    batch = run_rank_perturbation(1000, 2)
    assert batch.passed


def test_azuma():
    assert azuma_constant(2) == pytest.approx(8.0)
    assert rademacher_walk_moment(np.ones(100), 4) == 3 * 100 ** 2 - 2 * 100 == 29800
    zero = azuma_moment_check(np.zeros(10), 2, 1000, 0)
    assert zero.details["estimate"] == 0.0 and zero.passed
    r2 = azuma_moment_check(np.ones(100), 2, 10 ** 5, 1)
    assert r2.details["exact"] == 100 and r2.details["bound"] == pytest.approx(800.0) and r2.passed
    r4 = azuma_moment_check(np.ones(100), 4, 10 ** 5, 2)
    assert r4.details["exact"] == 29800 and r4.passed
    with pytest.raises(ValueError):
        azuma_moment_check(np.ones(3), 3, 10, 0)


def test_fourth_moment_closed_form_by_enumeration():
    c = np.array([1.0, 2.0, 0.5, 3.0])
    vals = []
    for bits in range(16):
        eps = np.array([1 if bits >> k & 1 else -1 for k in range(4)])
        vals.append((eps @ c) ** 4)
    assert rademacher_walk_moment(c, 4) == pytest.approx(np.mean(vals))


def test_zeta_m_identity_examples():
    Z = PeriodicBlockBandMatrix.zeros(4, 2)
    r = zeta_m_identity_check(Z.shift(0), 0.7 + 0.2j)
    assert r.details["rhs"] == pytest.approx(-1) and r.details["lhs"] == pytest.approx(-1)
    X = generate(20, 4, "gaussian-complex", 5)
    r = zeta_m_identity_check(X.shift(1.0), 1 + 1j)
    assert r.max_violation <= 1e-8
    with pytest.raises(ValueError):
        zeta_m_identity_check(generate(120, 10, "rademacher", 0), 1j)


def test_zeta_m_identity_invariant_under_column_permutation():
    from blockband.bandmat import to_dense
    X = generate(20, 4, "gaussian-complex", 6)
    A = to_dense(X.shift(1.0))
    perm = np.arange(20)
    perm[[4, 6]] = [6, 4]
    a = zeta_m_identity_check(A, 1 + 1j)
    b = zeta_m_identity_check(A[:, perm], 1 + 1j)
    assert a.passed and b.passed
    assert abs(a.details["lhs"] - b.details["lhs"]) < 1e-10


def test_zeta_m_batch():
    assert run_zeta_m(10, 3).passed


def test_diagonal_resolvent_symmetry():
    r = diagonal_resolvent_symmetry_check(60, 6, "gaussian-complex", 1 + 1j, 1.0, 500, 7)
    assert r.details["structural_ok"]
    assert r.passed, r.details
    assert r.details["ks_pvalue_entry0_vs_entryb"] > 1e-3
    with pytest.raises(ValueError):
        diagonal_resolvent_symmetry_check(60, 6, "gaussian-complex", 1j, 1.0, 10, 0)


def test_deterministic_identity_blocks_have_constant_diagonal():
    from blockband.oracles import _diag_resolvent
    I = PeriodicBlockBandMatrix.identity_blocks(4, 3, scale=0.5)
    d = _diag_resolvent(I, 0.3, 1 + 1j)
    assert np.allclose(d, d[0], atol=1e-14)


@given(st.integers(2, 8), st.integers(0, 10 ** 6),
       st.builds(complex, st.floats(-5, 5), st.floats(0.01, 3) | st.floats(-3, -0.01)))
def test_trace_perturbation_property(n, seed, zeta):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert trace_perturbation_check(B @ B.conj().T, v, zeta).passed
    assert sherman_morrison_check(B + n * np.eye(n), v).passed
