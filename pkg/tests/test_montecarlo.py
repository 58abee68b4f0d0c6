import numpy as np
import pytest

from gooddeal.checks import default_cells
from gooddeal.errors import ConfigError
from gooddeal.linalg import SPDMatrix
from gooddeal.market import NGDKernel, PriorSpec, xi_hat
from gooddeal.markovian import ClosedFormSolution, PutScenario, bound_provider
from gooddeal.montecarlo import (
    AlignedKernel, MartingaleKernel, default_pairs, simulate, supermartingale_test, tracking_error,
)

S = PutScenario()
PROV = ClosedFormSolution(S)


def test_martingale_law_for_S():
    s = S.replace(b=0.05, h=0.3)
    prior = PriorSpec(s.a_hi)
    lam = -xi_hat(s.market, s.a_hi)
    b = simulate(s, prior, NGDKernel(lam), 100_000, 10, seed=1)
    st = b.S_paths[:, -1]
    assert abs(st.mean() - s.S0) <= 3 * st.std(ddof=1) / np.sqrt(st.size)
    assert np.all(b.S_paths > 0) and np.all(b.L_paths > 0)
    assert b.covariance_check()


def test_lognormal_moment_under_identity_prior():
    s = S.replace(gamma=0.1, a1_lo=0.8, a2_lo=0.8)
    b = simulate(s, PriorSpec(SPDMatrix.identity(2)), None, 100_000, 4, seed=2)
    lt = b.L_paths[:, -1]
    assert abs(lt.mean() - s.L0 * np.exp(0.1)) <= 3 * lt.std(ddof=1) / np.sqrt(lt.size)


def test_determinism_and_blocks():
    p = PriorSpec(S.a_hi)
    a = simulate(S, p, None, 2500, 8, seed=9, block_size=1000)
    b = simulate(S, p, None, 2500, 8, seed=9, block_size=1000)
    np.testing.assert_array_equal(a.L_paths, b.L_paths)
    tail = simulate(S, p, None, 500, 8, seed=9, block_size=1000, first_block=2)
    np.testing.assert_array_equal(a.L_paths[2000:], tail.L_paths)


def test_prior_outside_interval_rejected():
    with pytest.raises(ConfigError):
        simulate(S, PriorSpec(SPDMatrix.diag(2.0, 1.0)), None, 10, 2, seed=0)


def test_tracking_error_zero_strategy():
    b = simulate(S, PriorSpec(S.a_hi), None, 200, 10, seed=4)
    R = tracking_error(S, b, PROV.bound, lambda t, L, a: np.zeros(2))
    pi = np.column_stack([PROV.bound(t, b.L_paths[:, k]) for k, t in enumerate(b.times)])
    np.testing.assert_allclose(R, pi - pi[:, :1], atol=1e-12)
    assert np.all(R[:, 0] == 0.0)


def test_tracking_error_under_reference_prior():
    b = simulate(S, PriorSpec(S.a_hi), NGDKernel(np.zeros(2)), 100_000, 50, seed=5)
    R = tracking_error(S, b, PROV.bound, PROV.hedge)[:, -1]
    assert R.mean() <= 3 * R.std(ddof=1) / np.sqrt(R.size)


def test_kernels_feasible():
    s = S.replace(b=0.05)
    prov = bound_provider(s)
    for prior in default_cells(s)[0]:
        for k in (AlignedKernel(), MartingaleKernel(1.0), MartingaleKernel(-1.0)):
            lam = k.resolve(s, prior, prov).lam
            assert np.linalg.norm(lam) <= s.h + 1e-12


def test_pairs_must_be_on_grid():
    with pytest.raises(ConfigError):
        supermartingale_test(S, [PriorSpec(S.a_hi)], [NGDKernel(np.zeros(2))], [(0.0, 0.105)], 100, 1, PROV,
                             n_steps=10)
    assert default_pairs(1.0) == [(0.0, 0.2), (0.2, 0.4), (0.4, 0.6000000000000001), (0.6000000000000001, 0.8),
                                  (0.8, 1.0)] or len(default_pairs(1.0)) == 5


def test_reduced_paths_consistent_and_power():
    priors, kernels = default_cells(S)
    pairs = default_pairs(S.T)
    rep = supermartingale_test(S, priors[:1], kernels, pairs, 20_000, 77, PROV, n_steps=50)
    assert rep.all_pass
    assert len(rep.rows) == len(kernels) * 5
    assert np.all(rep.std_error > 0)
    broken = supermartingale_test(S, priors[:1], [AlignedKernel()], pairs, 20_000, 77, PROV, n_steps=50,
                                  hedge_multiplier=2.0)
    assert not broken.all_pass
    csv_text = rep.to_csv({"config_hash": "x"})
    assert csv_text.splitlines()[0].startswith("prior,kernel,s,t")
    assert '"meta"' in rep.to_json()


def test_report_deterministic():
    args = (S, [PriorSpec(S.a_hi, label="a_hi")], [NGDKernel(np.zeros(2), "zero")], [(0.0, 0.5), (0.5, 1.0)],
            3000, 5, PROV)
    assert supermartingale_test(*args, n_steps=10).to_csv() == supermartingale_test(*args, n_steps=10).to_csv()
