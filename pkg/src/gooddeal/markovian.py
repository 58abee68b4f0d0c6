"""Put on a non-traded asset under volatility and drift ambiguity.

The traded asset ``S`` loads on the first Brownian factor and the
non-traded underlying ``L`` on both:

    dS = S (b dt + sigma_S dB^1),    dL = L (gamma dt + beta c.dB),
    c = (rho, sqrt(1 - rho^2)),      dB = a^{1/2} dW.

For ``b = 0`` and ``delta = 0`` the robust good-deal bound of the put
``(K - L_T)^+`` is a Black-Scholes put priced at the largest volatility
``a_hi`` with a drift penalised by the unhedgeable part of the risk. In
general the bound solves an HJB equation over the volatility interval,
which is solved here on a grid of matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import ndtr
from scipy.stats import norm

from .errors import ConfigError, InfeasibleTheta, RegimeError
from .generator import GenPoint, gen_robust
from .linalg import SPDMatrix
from .market import MarketSpec, interval_grid, validate
from .pde import PDEGrid, PDEParams, apply_stencil, check_nodes, solve_backward, stencils

__all__ = [
    "PutScenario",
    "ClosedFormPut",
    "closed_form_params",
    "closed_form_bound",
    "closed_form_Z",
    "closed_form_hedge",
    "k_compensator_rate",
    "gamma_sensitivity",
    "superreplication_price",
    "control_domain_point",
    "static_put_value",
    "robust_control_bound",
    "solve_semilinear_pde",
    "solve_robust_pde",
    "good_deal_driver",
    "rho_driver",
    "ClosedFormSolution",
    "PDESolution",
    "bs_put",
]


@dataclass(frozen=True)
class PutScenario:
    S0: float = 100.0
    L0: float = 100.0
    sigma_S: float = 0.25
    beta: float = 0.2
    rho: float = 0.5
    gamma: float = 0.0
    b: float = 0.0
    strike: float = 100.0
    T: float = 1.0
    a1_lo: float = 0.8
    a2_lo: float = 0.8
    a1_hi: float = 1.2
    a2_hi: float = 1.2
    h: float = 0.3
    delta: float = 0.0
    a12_lo: float = 0.0
    a12_hi: float = 0.0

    def __post_init__(self):
        for name in ("S0", "L0", "sigma_S", "beta", "strike", "T", "a1_lo", "a2_lo", "a1_hi", "a2_hi"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [-1, 1]")
        if self.h < 0 or self.delta < 0:
            raise ConfigError("h and delta must be nonnegative")

    def replace(self, **kw) -> "PutScenario":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(kw)
        return PutScenario(**vals)

    @property
    def c(self) -> np.ndarray:
        return np.array([self.rho, np.sqrt(max(1.0 - self.rho**2, 0.0))])

    @property
    def a_lo(self) -> SPDMatrix:
        return SPDMatrix([[self.a1_lo, self.a12_lo], [self.a12_lo, self.a2_lo]])

    @property
    def a_hi(self) -> SPDMatrix:
        return SPDMatrix([[self.a1_hi, self.a12_hi], [self.a12_hi, self.a2_hi]])

    @property
    def market(self) -> MarketSpec:
        return MarketSpec(
            sigma=np.array([[self.sigma_S, 0.0]]),
            b=np.array([self.b]),
            h=self.h,
            delta=self.delta,
            a_lo=self.a_lo,
            a_hi=self.a_hi,
            T=self.T,
        )

    def validate(self):
        return validate(self.market)

    @property
    def in_closed_form_regime(self) -> bool:
        return self.b == 0.0 and self.delta == 0.0 and self.a12_hi == 0.0

    def payoff(self, L) -> np.ndarray:
        return np.maximum(self.strike - np.asarray(L, dtype=float), 0.0)


def _require_regime(s: PutScenario) -> None:
    if s.b != 0.0 or s.delta != 0.0:
        raise RegimeError(
            f"closed form needs b = 0 and delta = 0 (got b = {s.b}, delta = {s.delta}); "
            "use robust_control_bound or solve_robust_pde"
        )
    if s.a12_hi != 0.0:
        raise RegimeError("closed form needs a diagonal upper volatility bound")


@dataclass(frozen=True)
class ClosedFormPut:
    m: float
    beta_bar: float
    rho_bar: float
    d_plus: np.ndarray
    d_minus: np.ndarray
    tau: float


def closed_form_params(s: PutScenario, t: float, L) -> ClosedFormPut:
    _require_regime(s)
    tau = s.T - t
    if tau < -1e-12:
        raise ValueError(f"t = {t} is after maturity {s.T}")
    tau = max(tau, 0.0)
    bb2 = s.beta**2 * (s.rho**2 * s.a1_hi + (1 - s.rho**2) * s.a2_hi)
    bb = np.sqrt(bb2)
    rho_bar = s.rho * np.sqrt(s.a1_hi) * s.beta / bb
    m = s.gamma - s.h * s.beta * np.sqrt(1 - s.rho**2) * np.sqrt(s.a2_hi)
    L = np.asarray(L, dtype=float)
    if tau > 0:
        with np.errstate(divide="ignore"):
            base = np.log(L / s.strike)
        sd = bb * np.sqrt(tau)
        dp = (base + (m + 0.5 * bb2) * tau) / sd
        dm = (base + (m - 0.5 * bb2) * tau) / sd
    else:
        dp = dm = np.where(L > s.strike, np.inf, np.where(L < s.strike, -np.inf, 0.0))
    return ClosedFormPut(m=m, beta_bar=bb, rho_bar=rho_bar, d_plus=dp, d_minus=dm, tau=tau)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def closed_form_bound(s: PutScenario, t: float, L):
    """Robust good-deal bound ``K N(-d_-) - L e^{m tau} N(-d_+)``."""
    p = closed_form_params(s, t, L)
    L = np.asarray(L, dtype=float)
    if p.tau == 0.0:
        return _scalar(s.payoff(L))
    return _scalar(s.strike * ndtr(-p.d_minus) - L * np.exp(p.m * p.tau) * ndtr(-p.d_plus))


def _delta(s: PutScenario, t, L):
    p = closed_form_params(s, t, L)
    return -np.exp(p.m * p.tau) * ndtr(-p.d_plus), p


def _gamma(s: PutScenario, t, L):
    p = closed_form_params(s, t, L)
    L = np.asarray(L, dtype=float)
    if p.tau == 0.0:
        return np.zeros_like(L)
    return np.exp(p.m * p.tau) * norm.pdf(p.d_plus) / (L * p.beta_bar * np.sqrt(p.tau))


def closed_form_Z(s: PutScenario, t: float, L) -> np.ndarray:
    """``Z = beta L v_x c``; shape ``(2,)`` or ``(..., 2)`` for array ``L``."""
    vx, _ = _delta(s, t, L)
    return (s.beta * np.asarray(L, dtype=float) * vx)[..., None] * s.c


def closed_form_hedge(s: PutScenario, t: float, L, a: SPDMatrix) -> np.ndarray:
    """Good-deal hedge ``beta L v_x (rho + (a12/a11) sqrt(1 - rho^2), 0)``."""
    a = np.asarray(a, dtype=float)
    vx, _ = _delta(s, t, L)
    first = s.beta * np.asarray(L, dtype=float) * vx * (s.rho + a[0, 1] / a[0, 0] * np.sqrt(1 - s.rho**2))
    return np.stack([first, np.zeros_like(first)], axis=-1)


def k_compensator_rate(s: PutScenario, t: float, L, a: SPDMatrix):
    """Rate of the nondecreasing compensator under a constant prior ``a``.

    Sum of the hedging-penalty gap (unhedgeable volatility at ``a`` versus at
    ``a_hi``) and the convexity gap ``c^T (a_hi - a) c`` weighted by the
    put's gamma.
    """
    a = np.asarray(a, dtype=float)
    L = np.asarray(L, dtype=float)
    vx, _ = _delta(s, t, L)
    vxx = _gamma(s, t, L)
    det = a[0, 0] * a[1, 1] - a[0, 1] ** 2
    drift_gap = np.sqrt(det / a[0, 0]) - np.sqrt(s.a2_hi)
    c = s.c
    conv_gap = float(c @ (np.asarray(s.a_hi) - a) @ c)
    out = s.h * s.beta * np.sqrt(1 - s.rho**2) * L * vx * drift_gap + 0.5 * s.beta**2 * L**2 * vxx * conv_gap
    return _scalar(out)


def gamma_sensitivity(s: PutScenario, t: float, L):
    """``d bound / d gamma = -(T - t) e^{m(T - t)} L N(-d_+)``; never positive."""
    p = closed_form_params(s, t, L)
    L = np.asarray(L, dtype=float)
    if p.tau == 0.0:
        return _scalar(np.zeros_like(L))
    return _scalar(-p.tau * np.exp(p.m * p.tau) * L * ndtr(-p.d_plus))


def superreplication_price(s: PutScenario, t: float, L=None):
    """Superreplication price: the strike before maturity, the payoff at it.

    Valid for ``|rho| < 1``, where ``L`` carries unhedgeable risk.
    """
    if t < s.T:
        return s.strike if L is None else _scalar(np.full(np.shape(L), s.strike, dtype=float))
    if L is None:
        raise ValueError("L is required at maturity")
    return _scalar(s.payoff(L))


def control_domain_point(s: PutScenario, a: SPDMatrix) -> tuple[float, float]:
    """``(beta(a), gamma(a))`` for the case ``sigma_S = beta = 1``, ``gamma = delta = rho = 0``."""
    if not (s.sigma_S == 1.0 and s.beta == 1.0 and s.gamma == 0.0 and s.delta == 0.0 and s.rho == 0.0):
        raise RegimeError("control domain point needs sigma_S = 1, beta = 1, gamma = 0, delta = 0, rho = 0")
    a = np.asarray(a, dtype=float)
    a11, a12, a22 = a[0, 0], a[0, 1], a[1, 1]
    slack = s.h**2 - s.b**2 / a11
    if slack <= 0:
        raise InfeasibleTheta(f"h^2 - b^2/a11 = {slack:.6g} is not positive")
    gamma_a = -s.b * a12 / a11 - np.sqrt(slack) * np.sqrt(a11 * a22 - a12**2) / np.sqrt(a11)
    return float(a22), float(gamma_a)


def bs_put(strike: float, L, drift: float, var_rate: float, tau: float):
    """``E[(K - L_tau)^+]`` for lognormal ``L`` with log-drift ``drift - var_rate/2``; no discounting."""
    L = np.asarray(L, dtype=float)
    if tau <= 0:
        return _scalar(np.maximum(strike - L, 0.0))
    sd = np.sqrt(var_rate * tau)
    fwd = L * np.exp(drift * tau)
    dp = (np.log(fwd / strike) + 0.5 * sd**2) / sd
    return _scalar(strike * ndtr(-(dp - sd)) - fwd * ndtr(-dp))


def _loading_rates(s: PutScenario, a: SPDMatrix) -> tuple[float, float, float]:
    """``(c^T a c, F(a^{1/2} c; a), F(-a^{1/2} c; a))`` for the robust generator at ``a``."""
    u = a.sqrt_cache @ s.c
    pt = GenPoint.at(s.market, a, u)
    return float(s.c @ a.entries @ s.c), gen_robust(pt).value, gen_robust(pt.with_z(-u)).value


def static_put_value(s: PutScenario, a: SPDMatrix, t: float = 0.0, L=None):
    """Bound when the prior is frozen at ``a``: a put on ``L`` with penalised drift."""
    q, _, f_minus = _loading_rates(s, a)
    L = s.L0 if L is None else L
    return bs_put(s.strike, L, s.gamma + s.beta * f_minus, s.beta**2 * q, s.T - t)


def robust_control_bound(s: PutScenario, k: int = 20) -> tuple[float, SPDMatrix]:
    """Largest frozen-prior bound over a ``k``-per-axis grid of ``[a_lo, a_hi]``.

    Each grid matrix is priced exactly as a lognormal put with drift
    ``gamma + beta F(-a^{1/2} c; a)`` and variance rate ``beta^2 c^T a c``.
    """
    best, arg = -np.inf, None
    for a in interval_grid(s.a_lo, s.a_hi, k):
        v = static_put_value(s, a)
        if v > best + 1e-15:
            best, arg = v, a
    return float(best), arg


# ---------------------------------------------------------------- PDE solves


def _log_nodes(s: PutScenario, params: PDEParams) -> np.ndarray:
    if params.y_nodes is not None:
        return check_nodes(np.asarray(params.y_nodes, dtype=float))
    var = s.beta**2 * max(s.rho**2 * s.a1_hi + (1 - s.rho**2) * s.a2_hi, s.c @ np.asarray(s.a_hi) @ s.c)
    half = params.width * np.sqrt(var * s.T)
    return np.linspace(np.log(s.strike) - half, np.log(s.strike) + half, params.nx + 1)


def _smoothed_payoff(s: PutScenario, y: np.ndarray) -> np.ndarray:
    """Payoff with the strike cells replaced by their cell averages in ``y``.

    Removes the kink-induced loss of accuracy; the stored terminal slice
    stays the exact payoff.
    """
    out = s.payoff(np.exp(y))
    k = np.log(s.strike)
    mid = 0.5 * (y[1:] + y[:-1])
    lo = np.concatenate([[y[0]], mid])
    hi = np.concatenate([mid, [y[-1]]])
    for i in np.nonzero((lo < k) & (hi > k))[0]:
        # integral of K - e^u over [lo, k], divided by the cell width
        out[i] = (s.strike * (k - lo[i]) - (s.strike - np.exp(lo[i]))) / (hi[i] - lo[i])
    return out


def good_deal_driver(s: PutScenario):
    """Driver ``m x p`` of the closed-form regime."""
    m = closed_form_params(s, 0.0, s.L0).m
    return lambda x, p: m * x * p


def rho_driver(s: PutScenario):
    """Driver ``gamma x p + (h + delta) beta_bar x |p|`` of the risk-measure bound."""
    bb = s.beta * np.sqrt(s.c @ np.asarray(s.a_hi) @ s.c)
    return lambda x, p: s.gamma * x * p + (s.h + s.delta) * bb * x * np.abs(p)


def solve_semilinear_pde(s: PutScenario, driver, params: PDEParams | None = None, var_rate: float | None = None) -> PDEGrid:
    """Solve ``v_t + driver(x, v_x) + (var_rate/2) x^2 v_xx = 0`` with put payoff.

    ``var_rate`` defaults to ``beta^2 c^T a_hi c``.
    """
    params = params or PDEParams()
    y = _log_nodes(s, params)
    x = np.exp(y)
    t_nodes = np.linspace(0.0, s.T, params.nt + 1)
    if var_rate is None:
        var_rate = s.beta**2 * float(s.c @ np.asarray(s.a_hi) @ s.c)
    d1, _ = stencils(y)
    diff = np.full(len(y) - 2, 0.5 * var_rate)
    xi = x[1:-1]

    def coeffs(v):
        vy = apply_stencil(d1, v)
        return diff, np.asarray(driver(xi, vy / xi), dtype=float)

    vals = solve_backward(y, t_nodes, _smoothed_payoff(s, y), s.strike, 0.0, coeffs, params, cap=10 * s.strike)
    vals[-1] = s.payoff(x)
    return PDEGrid(x_nodes=x, t_nodes=t_nodes, values=vals)


def solve_robust_pde(s: PutScenario, params: PDEParams | None = None, k: int = 5) -> PDEGrid:
    """HJB over the volatility interval for general ``b`` and ``delta``.

    ``v_t + max_a [ beta^2 c^T a c (v_yy - v_y)/2 + gamma v_y - beta |v_y| F(sgn(v_y) a^{1/2} c; a) ] = 0``
    in log-spot ``y``, with ``a`` ranging over a ``k``-per-axis grid.
    """
    params = params or PDEParams()
    grid = interval_grid(s.a_lo, s.a_hi, k)
    rates = np.array([_loading_rates(s, a) for a in grid])  # (n_a, 3)
    q, f_plus, f_minus = rates[:, 0], rates[:, 1], rates[:, 2]
    y = _log_nodes(s, params)
    x = np.exp(y)
    t_nodes = np.linspace(0.0, s.T, params.nt + 1)
    d1, d2 = stencils(y)

    def coeffs(v):
        vy = apply_stencil(d1, v)
        vyy = apply_stencil(d2, v)
        f = np.where(vy[None, :] >= 0, f_plus[:, None], f_minus[:, None])
        first = s.gamma * vy[None, :] - s.beta * np.abs(vy)[None, :] * f
        diff = 0.5 * s.beta**2 * q[:, None]
        obj = diff * (vyy - vy)[None, :] + first
        best = np.argmax(obj, axis=0)
        cols = np.arange(len(vy))
        return diff[best, 0], first[best, cols]

    vals = solve_backward(y, t_nodes, _smoothed_payoff(s, y), s.strike, 0.0, coeffs, params, cap=10 * s.strike)
    vals[-1] = s.payoff(x)
    return PDEGrid(x_nodes=x, t_nodes=t_nodes, values=vals)


# --------------------------------------------------------- bound providers


@dataclass(frozen=True, eq=False)
class ClosedFormSolution:
    """Bound and hedge from the closed form (``b = 0``, ``delta = 0``)."""

    s: PutScenario

    def __post_init__(self):
        _require_regime(self.s)

    def bound(self, t, L):
        return closed_form_bound(self.s, t, L)

    def Z(self, t, L):
        return closed_form_Z(self.s, t, L)

    def hedge(self, t, L, a):
        return closed_form_hedge(self.s, t, L, a)


@dataclass(eq=False)
class PDESolution:
    """Bound and hedge read off a PDE grid.

    The hedge uses that the robust generator is 1-homogeneous: for
    ``Z = beta L v_x c`` the saddle point at ``a^{1/2} Z`` is the one at
    ``sign(v_x) a^{1/2} c`` scaled by ``beta L |v_x|``.
    """

    s: PutScenario
    grid: PDEGrid
    _cache: dict = field(default_factory=dict, repr=False)

    def bound(self, t, L):
        return _scalar(self.grid.value_at(t, L))

    def Z(self, t, L):
        vx = self.grid.delta_at(t, L)
        return (self.s.beta * np.asarray(L, dtype=float) * vx)[..., None] * self.s.c

    def _unit_hedges(self, a: SPDMatrix) -> tuple[np.ndarray, np.ndarray]:
        if a not in self._cache:
            u = a.sqrt_cache @ self.s.c
            pt = GenPoint.at(self.s.market, a, u)
            self._cache[a] = (gen_robust(pt).hedge(a), gen_robust(pt.with_z(-u)).hedge(a))
        return self._cache[a]

    def hedge(self, t, L, a):
        if not isinstance(a, SPDMatrix):
            a = SPDMatrix(a)
        plus, minus = self._unit_hedges(a)
        scale = self.s.beta * np.asarray(L, dtype=float) * self.grid.delta_at(t, L)
        out = np.where((scale >= 0)[..., None], plus, minus) * np.abs(scale)[..., None]
        return out


def bound_provider(s: PutScenario, params: PDEParams | None = None):
    """Closed form when valid, otherwise the HJB grid."""
    if s.in_closed_form_regime:
        return ClosedFormSolution(s)
    return PDESolution(s, solve_robust_pde(s, params))
