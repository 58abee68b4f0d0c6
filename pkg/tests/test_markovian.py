import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import ndtr

from gooddeal.checks import lognormal_put_quad
from gooddeal.errors import RegimeError
from gooddeal.generator import GenPoint, phi_bar_of
from gooddeal.linalg import SPDMatrix
from gooddeal.markovian import (
    PDESolution, PutScenario, bound_provider, bs_put, closed_form_bound, closed_form_hedge, closed_form_params,
    closed_form_Z, control_domain_point, gamma_sensitivity, k_compensator_rate, robust_control_bound,
    solve_robust_pde, static_put_value, superreplication_price,
)
from gooddeal.pde import PDEParams

S = PutScenario()


def test_params_invariants():
    s = PutScenario(rho=0.3, a1_hi=1.1, a2_hi=1.4, h=0.25, gamma=0.05)
    p = closed_form_params(s, 0.0, 100.0)
    assert p.beta_bar**2 == pytest.approx(0.04 * (0.09 * 1.1 + 0.91 * 1.4), abs=1e-12)
    assert p.m == pytest.approx(0.05 - 0.25 * 0.2 * np.sqrt(0.91) * np.sqrt(1.4), abs=1e-12)


def test_bound_terminal_and_limits():
    assert closed_form_bound(S, S.T, 80.0) == 20.0
    assert closed_form_bound(S, 0.0, 1e-12) == pytest.approx(S.strike, abs=1e-6)
    assert 0.0 <= closed_form_bound(S, 0.0, S.L0) < superreplication_price(S, 0.0) == S.strike


def test_bound_is_bs_put_oracle():
    # independent Black-Scholes with drift m and volatility beta_bar
    p = closed_form_params(S, 0.25, 93.0)
    sd = p.beta_bar * np.sqrt(0.75)
    fwd = 93.0 * np.exp(p.m * 0.75)
    d1 = (np.log(fwd / 100.0) + 0.5 * sd * sd) / sd
    ref = 100.0 * ndtr(-(d1 - sd)) - fwd * ndtr(-d1)
    assert closed_form_bound(S, 0.25, 93.0) == pytest.approx(ref, rel=1e-13)


def test_regime_error():
    with pytest.raises(RegimeError):
        closed_form_bound(S.replace(b=0.01), 0.0, 100.0)
    with pytest.raises(RegimeError):
        closed_form_bound(S.replace(delta=0.01), 0.0, 100.0)


def test_Z_cases():
    assert closed_form_Z(S.replace(rho=1.0), 0.0, 90.0)[1] == 0.0
    np.testing.assert_allclose(closed_form_Z(S, 0.0, 1e8), 0.0, atol=1e-12)


@pytest.mark.parametrize("t,L", [(0.0, 85.0), (0.3, 100.0), (0.8, 120.0)])
def test_Z_finite_difference(t, L):
    step = 1e-4 * L
    fd = (closed_form_bound(S, t, L + step) - closed_form_bound(S, t, L - step)) / (2 * step)
    np.testing.assert_allclose(closed_form_Z(S, t, L), fd * S.beta * L * S.c, rtol=1e-6)


def test_hedge_cases():
    s0 = S.replace(rho=0.0)
    np.testing.assert_array_equal(closed_form_hedge(s0, 0.0, 90.0, SPDMatrix.diag(1.0, 1.1)), [0.0, 0.0])
    p = closed_form_params(S, 0.0, 90.0)
    ref = -S.beta * np.exp(p.m * p.tau) * ndtr(-p.d_plus) * 90.0 * np.array([S.rho, 0.0])
    np.testing.assert_allclose(closed_form_hedge(S, 0.0, 90.0, S.a_hi), ref, rtol=1e-13)


@pytest.mark.parametrize("a12", [-0.15, 0.1, 0.2])
def test_hedge_matches_generator(a12):
    s = S.replace(a12_lo=-0.2, a12_hi=0.0, a1_lo=0.8, a2_lo=0.8)
    a = SPDMatrix([[1.0, a12], [a12, 1.1]])
    z = closed_form_Z(S, 0.2, 95.0)
    pt = GenPoint.at(s.market, a, a.sqrt_cache @ z)
    ref = a.inv_sqrt @ phi_bar_of(pt, np.zeros(2))
    np.testing.assert_allclose(closed_form_hedge(S, 0.2, 95.0, a), ref, rtol=1e-10, atol=1e-12)


def test_k_rate_cases(rng):
    assert k_compensator_rate(S, 0.0, 100.0, S.a_hi) == pytest.approx(0.0, abs=1e-14)
    assert k_compensator_rate(S, 0.0, 100.0, S.a_lo) > 0.0
    for _ in range(300):
        a11, a22 = rng.uniform(0.8, 1.2, 2)
        r = np.sqrt((a11 - 0.8) * (a22 - 0.8))
        r = min(r, np.sqrt((1.2 - a11) * (1.2 - a22)))
        a12 = rng.uniform(-r, r)
        a = np.array([[a11, a12], [a12, a22]])
        t, L = rng.uniform(0, 0.99), rng.uniform(40, 200)
        assert k_compensator_rate(S, t, L, a) >= -1e-10


def test_superreplication():
    assert superreplication_price(S, 0.0) == 100.0
    assert superreplication_price(S, S.T, 120.0) == 0.0


def test_control_domain_point():
    s = PutScenario(sigma_S=1.0, beta=1.0, rho=0.0, h=0.3)
    a = SPDMatrix.diag(1.0, 1.1)
    assert control_domain_point(s, a) == pytest.approx((1.1, -0.3 * np.sqrt(1.1)))
    assert control_domain_point(s, SPDMatrix.identity(2)) == pytest.approx((1.0, -0.3))
    sb = s.replace(b=0.1, a12_lo=-0.1, a12_hi=0.1)
    ag = np.array([[1.05, 0.07], [0.07, 0.95]])
    a11, a12, a22 = ag[0, 0], ag[0, 1], ag[1, 1]
    g = -0.1 * a12 / a11 - np.sqrt(0.09 - 0.01 / a11) * np.sqrt(np.linalg.det(ag) / a11)
    assert control_domain_point(sb, ag) == pytest.approx((a22, g), rel=1e-13)


def test_robust_control_argmax_is_a_hi():
    value, arg = robust_control_bound(S, 10)
    np.testing.assert_allclose(np.asarray(arg), np.asarray(S.a_hi))
    assert value >= static_put_value(S, S.a_lo)
    assert value == pytest.approx(closed_form_bound(S, 0.0, S.L0), rel=1e-12)


@pytest.mark.slow
def test_robust_control_refinement():
    # sigma_S = 1 keeps sup |xi_hat| = 0.1 / sqrt(0.8) below h
    s = S.replace(b=0.1, sigma_S=1.0)
    v20, _ = robust_control_bound(s, 20)
    v40, _ = robust_control_bound(s, 40)
    assert abs(v40 - v20) <= 1e-3 * s.strike


def test_gamma_sensitivity_cases():
    assert gamma_sensitivity(S, S.T, 100.0) == 0.0
    step = 1e-5
    fd = (closed_form_bound(S.replace(gamma=step), 0.0, 100.0)
          - closed_form_bound(S.replace(gamma=-step), 0.0, 100.0)) / (2 * step)
    assert gamma_sensitivity(S, 0.0, 100.0) == pytest.approx(fd, rel=1e-6)


@given(st.floats(-0.3, 0.3), st.floats(20.0, 300.0), st.floats(0.0, 0.99))
def test_gamma_sensitivity_nonpositive(g, L, t):
    assert gamma_sensitivity(S.replace(gamma=g), t, L) <= 0.0


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_bound_monotone_in_h(h1, h2):
    lo, hi = sorted((h1, h2))
    assert closed_form_bound(S.replace(h=lo), 0.0, 100.0) <= closed_form_bound(S.replace(h=hi), 0.0, 100.0) + 1e-12


def test_degenerate_regime_is_risk_neutral():
    s = S.replace(h=0.0)
    var = s.beta**2 * float(s.c @ np.asarray(s.a_hi) @ s.c)
    assert closed_form_bound(s, 0.0, s.L0) == pytest.approx(lognormal_put_quad(100.0, 100.0, var, 1.0), abs=1e-10)
    assert static_put_value(s, s.a_hi) == pytest.approx(closed_form_bound(s, 0.0, s.L0), abs=1e-12)


def test_hjb_matches_closed_form_in_regime():
    g = solve_robust_pde(S, PDEParams(nx=400, nt=200), k=5)
    assert g.value_at(0.0, S.L0) == pytest.approx(closed_form_bound(S, 0.0, S.L0), rel=2e-3)


def test_hjb_dominates_static_with_drift():
    s = S.replace(b=0.05)
    g = solve_robust_pde(s, PDEParams(nx=300, nt=150), k=5)
    static, _ = robust_control_bound(s, 5)
    assert g.value_at(0.0, s.L0) >= static - 2e-3 * s.strike
    assert np.all(g.values >= -1e-8) and np.all(g.values <= s.strike + 1e-8)


def test_provider_selection():
    assert type(bound_provider(S)).__name__ == "ClosedFormSolution"
    prov = bound_provider(S.replace(b=0.05), PDEParams(nx=200, nt=100))
    assert isinstance(prov, PDESolution)
    phi = prov.hedge(0.0, np.array([90.0, 110.0]), S.a_hi)
    assert phi.shape == (2, 2) and np.all(np.isfinite(phi))
    np.testing.assert_allclose(phi[:, 1], 0.0, atol=1e-12)


def test_bs_put_terminal():
    assert bs_put(100.0, 80.0, 0.1, 0.04, 0.0) == 20.0
