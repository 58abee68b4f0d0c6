import numpy as np
import pytest
from scipy.special import ndtr

from gooddeal.errors import GridError
from gooddeal.markovian import PutScenario, closed_form_bound, good_deal_driver, rho_driver, solve_semilinear_pde
from gooddeal.pde import PDEParams, apply_stencil, check_nodes, stencils

S = PutScenario()


def _max_rel_err(params):
    g = solve_semilinear_pde(S, good_deal_driver(S), params)
    x = g.x_nodes
    mask = (x >= 50) & (x <= 200)
    cf = closed_form_bound(S, 0.0, x[mask])
    return float(np.max(np.abs(g.values[0, mask] - cf) / cf))


def test_closed_form_agreement_400():
    assert _max_rel_err(PDEParams(nx=400, nt=400)) <= 1e-3


def test_refinement_ratio():
    coarse = _max_rel_err(PDEParams(nx=100, nt=100))
    fine = _max_rel_err(PDEParams(nx=400, nt=400))
    assert coarse / fine >= 3.0


def test_terminal_slice_exact():
    g = solve_semilinear_pde(S, good_deal_driver(S), PDEParams(nx=120, nt=40))
    np.testing.assert_array_equal(g.values[-1], np.maximum(100.0 - g.x_nodes, 0.0))
    assert np.all(g.values >= -1e-10) and np.all(g.values <= 100.0 + 1e-10)
    rows = list(g.to_rows())
    assert len(rows) == g.values.size and rows[0][:2] == (0.0, float(g.x_nodes[0]))


def test_zero_driver_is_black_scholes():
    var = 0.04
    g = solve_semilinear_pde(S, lambda x, p: 0.0 * x, PDEParams(nx=400, nt=400), var_rate=var)
    x = g.x_nodes[(g.x_nodes >= 60) & (g.x_nodes <= 160)]
    sd = np.sqrt(var)
    d1 = (np.log(x / 100.0) + 0.5 * var) / sd
    ref = 100.0 * ndtr(-(d1 - sd)) - x * ndtr(-d1)
    np.testing.assert_allclose(g.value_at(0.0, x), ref, rtol=1e-3, atol=1e-4)


def test_rho_dominates_good_deal():
    p = PDEParams(nx=200, nt=100)
    gd = solve_semilinear_pde(S, good_deal_driver(S), p)
    rho = solve_semilinear_pde(S, rho_driver(S), p)
    assert (gd.values - rho.values).max() <= 1e-6


def test_delta_at_matches_closed_form():
    g = solve_semilinear_pde(S, good_deal_driver(S), PDEParams())
    h = 1e-3
    fd = (closed_form_bound(S, 0.0, 100.0 + h) - closed_form_bound(S, 0.0, 100.0 - h)) / (2 * h)
    assert g.delta_at(0.0, 100.0) == pytest.approx(fd, rel=5e-3)


def test_stencils_exact_on_polynomials():
    y = np.linspace(-1.0, 1.0, 21)
    d1, d2 = stencils(y)
    v = y**4 - 2 * y**3 + y
    np.testing.assert_allclose(apply_stencil(d1, v)[1:-1], (4 * y**3 - 6 * y**2 + 1)[2:-2], atol=1e-10)
    np.testing.assert_allclose(apply_stencil(d2, v)[1:-1], (12 * y**2 - 12 * y)[2:-2], atol=1e-9)
    yn = np.array([0.0, 0.1, 0.3, 0.35, 0.6, 1.0])
    e1, e2 = stencils(yn)
    np.testing.assert_allclose(apply_stencil(e1, yn**2), 2 * yn[1:-1], atol=1e-12)
    np.testing.assert_allclose(apply_stencil(e2, yn**2), 2.0, atol=1e-10)


def test_grid_errors():
    with pytest.raises(GridError):
        PDEParams(nx=2)
    with pytest.raises(GridError):
        PDEParams(theta=0.3)
    with pytest.raises(GridError):
        check_nodes(np.array([0.0, 1.0, 0.5, 2.0, 3.0]))
