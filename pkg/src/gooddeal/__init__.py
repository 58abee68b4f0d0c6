"""Robust good-deal valuation bounds and hedges under drift and volatility uncertainty."""
__version__ = "0.1.0"

from .errors import (
    ConfigError, DegenerateVolatility, GoodDealError, GridError, InfeasibleKernel, InfeasibleTheta, NotSPD,
    RegimeError, StabilityError,
)
from .linalg import Projector, SPDMatrix, make_projector, spd_sqrt
from .market import MarketSpec, NGDKernel, PriorSpec, interval_grid, validate, xi_hat, xi_theta
from .generator import GenPoint, SaddleResult, gen_robust, gen_rho, gen_theta, minmax_check, phi_bar_of
from .pde import PDEGrid, PDEParams
from .markovian import (
    PutScenario, bound_provider, closed_form_bound, closed_form_hedge, closed_form_Z, gamma_sensitivity,
    k_compensator_rate, robust_control_bound, solve_robust_pde, solve_semilinear_pde, superreplication_price,
)
from .montecarlo import AlignedKernel, MartingaleKernel, TrackingReport, simulate, supermartingale_test
from .config import ScenarioConfig, load, parse, serialize

__all__ = [
    "__version__",
    "GoodDealError", "NotSPD", "DegenerateVolatility", "InfeasibleTheta", "InfeasibleKernel", "RegimeError",
    "GridError", "StabilityError", "ConfigError",
    "SPDMatrix", "Projector", "make_projector", "spd_sqrt",
    "MarketSpec", "PriorSpec", "NGDKernel", "validate", "interval_grid", "xi_hat", "xi_theta",
    "GenPoint", "SaddleResult", "gen_theta", "gen_robust", "gen_rho", "phi_bar_of", "minmax_check",
    "PDEParams", "PDEGrid",
    "PutScenario", "closed_form_bound", "closed_form_Z", "closed_form_hedge", "k_compensator_rate",
    "gamma_sensitivity", "superreplication_price", "robust_control_bound", "solve_semilinear_pde",
    "solve_robust_pde", "bound_provider",
    "AlignedKernel", "MartingaleKernel", "TrackingReport", "simulate", "supermartingale_test",
    "ScenarioConfig", "parse", "serialize", "load",
]
