import numpy as np
import pytest
from hypothesis import given, strategies as st

from gooddeal.errors import InfeasibleKernel, InfeasibleTheta
from gooddeal.linalg import SPDMatrix, in_interval, make_projector
from gooddeal.market import (
    MarketSpec, NGDKernel, PriorSpec, interval_grid, prior_violations, sup_xi_norm, validate, xi_hat, xi_theta,
)


def mkt(**kw):
    base = dict(sigma=np.array([[1.0, 0.0]]), b=np.array([0.0]), h=0.3, delta=0.0,
                a_lo=SPDMatrix.diag(0.8, 0.8), a_hi=SPDMatrix.diag(1.2, 1.2))
    base.update(kw)
    return MarketSpec(**base)


def test_xi_hat_zero_drift():
    np.testing.assert_array_equal(xi_hat(mkt(), SPDMatrix.identity(2)), np.zeros(2))


def test_xi_hat_diagonal_reduction():
    s = mkt(sigma=np.array([[0.25, 0.0]]), b=np.array([0.05]))
    np.testing.assert_allclose(xi_hat(s, SPDMatrix.identity(2)), [0.05 / 0.25, 0.0], atol=1e-15)


def test_xi_hat_defining_identities():
    a = SPDMatrix([[1.0, 0.5], [0.5, 1.0]])
    s = mkt(b=np.array([0.1]), a_lo=SPDMatrix.diag(0.4, 0.4), a_hi=SPDMatrix.diag(1.6, 1.6))
    v = xi_hat(s, a)
    sig = s.sigma
    np.testing.assert_allclose(sig @ a.sqrt_cache @ v, [0.1], atol=1e-14)
    np.testing.assert_allclose(make_projector(sig, a).ker(v), 0.0, atol=1e-14)


def test_xi_theta_cases():
    a = SPDMatrix([[1.0, 0.3], [0.3, 1.1]])
    s = mkt(b=np.array([0.05]), delta=0.1, h=0.5, a_lo=SPDMatrix.diag(0.5, 0.5), a_hi=SPDMatrix.diag(1.5, 1.5))
    xi = xi_hat(s, a)
    np.testing.assert_array_equal(xi_theta(s, a, np.zeros(2)), xi)
    ker = make_projector(s.sigma, a).ker_basis[:, 0] * 0.08
    np.testing.assert_allclose(xi_theta(s, a, ker), xi, atol=1e-15)
    th = np.array([0.06, -0.05])
    m = s.sigma @ a.sqrt_cache
    direct = xi + m.T @ np.linalg.inv(m @ m.T) @ m @ th
    np.testing.assert_allclose(xi_theta(s, a, th), direct, atol=1e-14)
    with pytest.raises(InfeasibleTheta):
        xi_theta(s, a, np.array([0.2, 0.0]))


def test_validate_degenerate_ok():
    assert validate(mkt(h=0.0)) == []


def test_validate_zero_h_with_drift():
    names = [v.condition for v in validate(mkt(h=0.0, b=np.array([0.1])))]
    assert names == ["feasibility"]


def test_validate_sup_xi_plus_delta():
    # sup over [0.8, 1.2] of |xi_hat| = b / sqrt(a11_lo); choose b for sup = 0.25
    b = 0.25 * np.sqrt(0.8)
    s = mkt(b=np.array([b]), delta=0.1)
    sup, witness = sup_xi_norm(s)
    assert sup == pytest.approx(0.25, abs=1e-12)
    assert witness.entries[0, 0] == pytest.approx(0.8)
    v = validate(s)
    assert [x.condition for x in v] == ["feasibility"]
    assert validate(mkt(b=np.array([b]), delta=0.04)) == []


def test_validate_loewner():
    v = validate(mkt(a_lo=SPDMatrix.diag(1.5, 0.8)))
    assert v and v[0].condition == "loewner"


def test_validate_ellipticity():
    v = validate(mkt(sigma=np.array([[1e-9, 0.0]])))
    assert "ellipticity" in [x.condition for x in v]


@given(st.integers(2, 7), st.floats(0.0, 0.3))
def test_interval_grid_inside(k, off):
    lo = SPDMatrix([[0.8, off * 0.5], [off * 0.5, 0.9]])
    hi = SPDMatrix([[1.3, off], [off, 1.4]])
    g = interval_grid(lo, hi, k)
    assert g
    assert all(in_interval(a, lo, hi, 1e-10) for a in g)
    ents = [a.entries for a in g]
    assert any(np.allclose(e, hi.entries) for e in ents)
    assert any(np.allclose(e, lo.entries) for e in ents)


def test_interval_grid_nested():
    lo, hi = SPDMatrix.diag(0.8, 0.8), SPDMatrix.diag(1.2, 1.2)
    coarse = {a.entries.round(12).tobytes() for a in interval_grid(lo, hi, 3)}
    fine = {a.entries.round(12).tobytes() for a in interval_grid(lo, hi, 5)}
    assert coarse <= fine


def test_interval_grid_three_dims():
    lo, hi = SPDMatrix.diag(0.5, 0.6, 0.7), SPDMatrix.diag(1.0, 1.1, 1.2)
    g = interval_grid(lo, hi, 3)
    assert len(g) > 27
    assert all(in_interval(a, lo, hi, 1e-10) for a in g)


def test_prior_and_kernel_checks():
    s = mkt(delta=0.05)
    assert prior_violations(s, PriorSpec(SPDMatrix.identity(2), np.array([0.03, 0.0]))) == []
    bad = prior_violations(s, PriorSpec(SPDMatrix.diag(2.0, 1.0), np.array([0.1, 0.0])))
    assert [v.condition for v in bad] == ["prior_bounds", "prior_theta"]
    NGDKernel(np.array([0.3, 0.0])).check(0.3)
    with pytest.raises(InfeasibleKernel):
        NGDKernel(np.array([0.3, 0.01])).check(0.3)
