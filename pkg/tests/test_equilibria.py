from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coagwave.config import load_config
from coagwave.equilibria import (RATE_KEYS, Classification, CubicCoeffs, P_prime, P_value,
                                 case_analysis_count, classify, equilibrium_from_T,
                                 equilibrium_state, isolate_positive_roots, perturb_rates,
                                 polynomial_coeffs, positive_roots, printed_polynomial_coeffs,
                                 sign_scan_count, tau0_matrix, verify_theorem1)
from coagwave.models import FULL14, ONE_EQ, REDUCED6, TWO_EQ, eval_rhs
from oracles import dense_sign_scan, numpy_positive_roots


@pytest.fixture(scope="module")
def params():
    return load_config().params


def test_constant_term_matches_direct_arithmetic(params):
    p = params
    sub = p.k2 * p.k10 * p.k9 * p.k11 / (p.h9 * p.h11 * p.h10)
    assert sub == pytest.approx(1.78e-6, rel=0.01)
    q = polynomial_coeffs(p)
    assert q.d == pytest.approx(p.T0 * (p.h2 - sub), rel=1e-14)
    assert q.d / p.T0 == pytest.approx(3220.0 / p.T0, rel=1e-3)


def test_polynomial_is_thrombin_balance_on_manifold(params):
    """P(T) = -T0 F_T(u(T)) at arbitrary T, the defining property."""
    for T in (1.0, 57.0, 400.0, 1399.0):
        u = equilibrium_from_T(T, params)
        F = eval_rhs(REDUCED6, u, params)
        assert P_value(T, params) == pytest.approx(-params.T0 * F[0], rel=1e-10)
        assert np.allclose(F[1:], 0.0, atol=1e-12 * max(1.0, np.max(u)))


def test_printed_coefficients_differ_only_by_missing_factors(params):
    p = params
    derived, printed = polynomial_coeffs(p), printed_polynomial_coeffs(p)
    assert printed.a == pytest.approx(derived.a, rel=1e-14)
    assert printed.d * p.T0 == pytest.approx(derived.d + p.h2 * p.T0 * (p.T0 - 1), rel=1e-12)
    # the printed form agrees with the derived one once h10 = 1 and k10_bar = 1
    q = p.replace(h10=1.0, k10_bar=1.0)
    d, pr = polynomial_coeffs(q), printed_polynomial_coeffs(q)
    assert pr.b == pytest.approx(d.b, rel=1e-12)
    assert pr.c == pytest.approx(d.c, rel=1e-12)


def test_zero_feedback_drops_leading_terms(params):
    q = polynomial_coeffs(params.replace(k2_bar=0.0, k10_bar=0.0))
    assert q.a == 0 and q.b == 0
    assert q.c != 0


def test_constructed_factorization():
    q = CubicCoeffs(1.0, 0.0, -7.0, 6.0)
    assert positive_roots(q) == pytest.approx([1.0, 2.0], rel=1e-12)
    assert case_analysis_count(q) == 2


def test_quadratic_and_linear_degradation():
    assert positive_roots(CubicCoeffs(0.0, 1.0, -3.0, 2.0)) == pytest.approx([1.0, 2.0])
    assert positive_roots(CubicCoeffs(0.0, 0.0, 2.0, -4.0)) == pytest.approx([2.0])
    assert positive_roots(CubicCoeffs(0.0, 0.0, 0.0, 1.0)) == []


def test_double_root_is_flagged_degenerate():
    # (T - 2)^2 (T + 1)
    q = CubicCoeffs(1.0, -3.0, 0.0, 4.0)
    iso = isolate_positive_roots(q)
    assert len(iso) == 1
    assert iso[0][0] == pytest.approx(2.0, rel=1e-6) and iso[0][1]


def test_two_root_case_of_the_analysis():
    # Q(0) > 0, larger critical point positive with Q < 0 there
    q = CubicCoeffs(1.0, -6.0, 5.0, 2.0)
    crit = sorted(np.roots([3, -12, 5]).real)
    assert q(crit[1]) < 0 and q.d > 0
    assert case_analysis_count(q) == 2 == len(positive_roots(q))


def test_table1_is_bistable(params):
    rep = classify(params)
    assert rep.classification is Classification.BISTABLE
    T1, T2 = rep.roots
    assert 0 < T1 < T2 < params.T0
    q = rep.coeffs
    assert dense_sign_scan(q.as_tuple(), params.T0, 400001) == 2
    assert rep.roots == pytest.approx(numpy_positive_roots(q.as_tuple()), rel=1e-9)
    assert rep.case_count == 2


def test_stationary_states_have_small_residual(params):
    rep = classify(params)
    for T, u, res in zip(rep.roots, rep.states, rep.residuals):
        assert res < 1e-8 * max(1.0, T)
        assert np.max(np.abs(eval_rhs(REDUCED6, u, params))) == res


def test_equilibrium_from_T_relations(params):
    p = params
    assert np.all(equilibrium_from_T(0.0, p) == 0)
    T = 321.0
    u = equilibrium_from_T(T, p)
    assert u[3] == p.k9 * p.k11 / (p.h9 * p.h11) * T


@pytest.mark.parametrize("kind", [FULL14, REDUCED6, TWO_EQ, ONE_EQ], ids=str)
def test_equilibrium_state_is_stationary_in_every_layout(kind, params):
    T2 = classify(params).upper_root
    u = equilibrium_state(kind, T2, params)
    F = eval_rhs(kind, u, params)
    if kind is FULL14:
        # the full model has its own (Michaelis-Menten) balance for T; only the
        # intermediate complexes are slaved exactly
        i = {s: k for k, s in enumerate(kind.species)}
        assert abs(F[i["C1"]]) < 1e-9 and abs(F[i["C2"]]) < 1e-9
    else:
        assert np.max(np.abs(F)) < 1e-8 * T2


def test_stability_of_roots(params):
    rep = classify(params)
    (pp1, pp2), (ev1, ev2) = rep.P_prime, rep.principal_eigenvalues
    assert pp1 < 0 < ev1
    assert pp2 > 0 > ev2
    assert rep.stable == [False, True]
    assert rep.theorem1_consistent


def test_strong_inhibition_removes_equilibria(params):
    rep = classify(params.replace(h2=params.h2 * 100))
    assert rep.classification is Classification.NO_POSITIVE_EQUILIBRIUM
    assert rep.roots == [] and rep.states == []
    q = rep.coeffs
    assert dense_sign_scan(q.as_tuple(), 10 * params.T0) == 0


def test_tau0_matrix_structure(params):
    rep = classify(params)
    for T in rep.roots:
        M = tau0_matrix(T, params)
        assert np.all(np.triu(M, 1) == 0)
        diag = np.diag(M)
        p = params
        assert diag[1:] == pytest.approx([-p.h5, -p.h8, -p.h11, -p.h9, -p.h10])
        assert np.sign(diag[0]) == -np.sign(P_prime(T, p))
        assert np.max(np.linalg.eigvals(M).real) == pytest.approx(diag.max())


def test_classification_invariant_under_rate_rescaling(params):
    """Scaling every rate (h2 included) by lambda scales Q by lambda."""
    base = classify(params).roots
    for lam in (0.3, 7.0):
        q = params.replace(**{k: getattr(params, k) * lam for k in RATE_KEYS})
        assert classify(q).roots == pytest.approx(base, rel=1e-9)


def test_rescaling_with_h2_fixed_is_not_invariant(params):
    lam = 3.0
    keys = [k for k in RATE_KEYS if k != "h2"]
    q = params.replace(**{k: getattr(params, k) * lam for k in keys})
    assert classify(q).roots != pytest.approx(classify(params).roots, rel=1e-6)


def test_theorem1_on_perturbed_rates(params):
    rep = verify_theorem1(params, trials=30, seed=3)
    assert rep.trials_accepted == 30
    assert rep.passed
    assert rep.n_checked >= 2 * 30


def test_perturbation_bounds(params):
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = perturb_rates(params, rng)
        for k in RATE_KEYS:
            ratio = getattr(q, k) / getattr(params, k)
            assert 0.5 <= ratio <= 2.0


def test_module_sign_scan_agrees_with_oracle():
    q = CubicCoeffs(1.0, -6.0, 11.0, -6.0)  # roots 1, 2, 3
    assert sign_scan_count(q, 10.0, 1e-3) == 3 == dense_sign_scan(q.as_tuple(), 10.0)
    assert positive_roots(q) == pytest.approx([1.0, 2.0, 3.0], rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(r1=st.floats(-50, 50), r2=st.floats(-50, 50), r3=st.floats(-50, 50),
       lead=st.floats(0.01, 100))
def test_constructed_roots_are_found(r1, r2, r3, lead):
    roots = sorted((r1, r2, r3))
    if min(abs(a - b) for a, b in zip(roots[:-1], roots[1:])) < 1e-3:
        return
    if any(abs(r) < 1e-3 for r in roots):
        return
    a = lead
    b = -lead * sum(roots)
    c = lead * (r1 * r2 + r1 * r3 + r2 * r3)
    d = -lead * r1 * r2 * r3
    found = positive_roots(CubicCoeffs(a, b, c, d))
    assert found == pytest.approx([r for r in roots if r > 0], rel=1e-8, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(re=st.floats(-20, 20), im=st.floats(0.5, 20), r=st.floats(-20, 20).filter(lambda v: abs(v) > 1e-3))
def test_complex_pair_leaves_one_real_root(re, im, r):
    # (T - r)(T^2 - 2 re T + re^2 + im^2)
    s = re * re + im * im
    q = CubicCoeffs(1.0, -(2 * re + r), s + 2 * re * r, -r * s)
    assert positive_roots(q) == (pytest.approx([r], rel=1e-8) if r > 0 else [])
