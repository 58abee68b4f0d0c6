"""Market and ambiguity specification.

A constant-coefficient market of ``d`` traded assets driven by ``n``
Brownian factors, with volatility ambiguity ``a`` in a Loewner interval
``[a_lo, a_hi]`` and drift ambiguity ``theta`` in a ball of radius ``delta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import qmc

from .errors import InfeasibleKernel, InfeasibleTheta
from .linalg import TOL, SPDMatrix, in_interval, loewner_leq, make_projector

__all__ = [
    "EPS_FEAS",
    "MarketSpec",
    "PriorSpec",
    "NGDKernel",
    "Violation",
    "xi_hat",
    "xi_theta",
    "validate",
    "interval_grid",
    "sup_xi_norm",
    "prior_violations",
    "strictly_below",
]

EPS_FEAS = 1e-9
_ZERO = 1e-14


def strictly_below(norm: float, h: float) -> bool:
    """``norm < h``, with the degenerate ``0 == h == 0`` case admitted."""
    return norm < h or (h <= _ZERO and norm <= _ZERO)


@dataclass(frozen=True, eq=False)
class MarketSpec:
    sigma: np.ndarray
    b: np.ndarray
    h: float
    delta: float
    a_lo: SPDMatrix
    a_hi: SPDMatrix
    T: float = 1.0

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if b.shape != (sigma.shape[0],):
            raise ValueError(f"b has shape {b.shape}, expected ({sigma.shape[0]},)")
        for name in ("a_lo", "a_hi"):
            val = getattr(self, name)
            if not isinstance(val, SPDMatrix):
                object.__setattr__(self, name, SPDMatrix(val))
        if self.a_lo.n != sigma.shape[1] or self.a_hi.n != sigma.shape[1]:
            raise ValueError("volatility bounds must be n x n with n = sigma.shape[1]")
        sigma.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "T", float(self.T))

    @property
    def n(self) -> int:
        return self.sigma.shape[1]

    @property
    def d(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """A constant prior: volatility matrix ``a`` and drift point ``theta``."""

    a: SPDMatrix
    theta: np.ndarray = field(default=None)
    label: str = ""

    def __post_init__(self):
        if not isinstance(self.a, SPDMatrix):
            object.__setattr__(self, "a", SPDMatrix(self.a))
        theta = np.zeros(self.a.n) if self.theta is None else np.asarray(self.theta, dtype=float)
        if theta.shape != (self.a.n,):
            raise ValueError(f"theta must have shape ({self.a.n},)")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True, eq=False)
class NGDKernel:
    """Girsanov kernel ``lam`` of a candidate valuation measure."""

    lam: np.ndarray
    label: str = ""

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    def check(self, h: float) -> None:
        norm = float(np.linalg.norm(self.lam))
        if norm > h + _ZERO:
            raise InfeasibleKernel(f"|lambda| = {norm:.6g} exceeds h = {h:.6g}")


class Violation(NamedTuple):
    condition: str
    message: str
    witness: np.ndarray | None = None


def xi_hat(spec: MarketSpec, a: SPDMatrix) -> np.ndarray:
    """Market price of risk ``a^{1/2} sigma^T (sigma a sigma^T)^{-1} b`` under prior ``a``."""
    if not isinstance(a, SPDMatrix):
        a = SPDMatrix(a)
    make_projector(spec.sigma, a)  # raises DegenerateVolatility
    gram = spec.sigma @ a.entries @ spec.sigma.T
    return a.sqrt_cache @ spec.sigma.T @ np.linalg.solve(gram, spec.b)


def xi_theta(spec: MarketSpec, a: SPDMatrix, theta: np.ndarray) -> np.ndarray:
    """Drift-shifted market price of risk ``xi_hat(a) + Pi^a(theta)``."""
    theta = np.asarray(theta, dtype=float)
    if np.linalg.norm(theta) > spec.delta + _ZERO:
        raise InfeasibleTheta(f"|theta| = {np.linalg.norm(theta):.6g} exceeds delta = {spec.delta:.6g}")
    proj = make_projector(spec.sigma, a)
    out = xi_hat(spec, a) + proj.im(theta)
    if not strictly_below(float(np.linalg.norm(out)), spec.h):
        raise InfeasibleTheta(f"|xi^theta| = {np.linalg.norm(out):.6g} is not below h = {spec.h:.6g}")
    return out


def _band_2x2(a11, a22, lo, hi):
    r_lo = np.sqrt(max(a11 - lo[0, 0], 0.0) * max(a22 - lo[1, 1], 0.0))
    r_hi = np.sqrt(max(hi[0, 0] - a11, 0.0) * max(hi[1, 1] - a22, 0.0))
    return max(lo[0, 1] - r_lo, hi[0, 1] - r_hi), min(lo[0, 1] + r_lo, hi[0, 1] + r_hi)


def interval_grid(a_lo: SPDMatrix, a_hi: SPDMatrix, k: int = 5) -> list[SPDMatrix]:
    """Deterministic sample of the Loewner interval ``[a_lo, a_hi]``.

    For n = 2 the entries are gridded directly: ``k`` points on each diagonal
    range and ``k`` points across the exact feasible band of the off-diagonal
    entry. For n > 2 the interval is parametrised as
    ``a_lo + D^{1/2} M D^{1/2}`` with ``0 <= M <= I`` and M sampled on a
    diagonal grid plus rotated low-discrepancy points. Grids for ``k`` and
    ``2k - 1`` are nested.
    """
    lo, hi = np.asarray(a_lo, dtype=float), np.asarray(a_hi, dtype=float)
    n = lo.shape[0]
    out: list[np.ndarray] = []
    if n == 1:
        out = [np.array([[x]]) for x in np.linspace(lo[0, 0], hi[0, 0], k)]
    elif n == 2:
        for a11 in np.linspace(lo[0, 0], hi[0, 0], k):
            for a22 in np.linspace(lo[1, 1], hi[1, 1], k):
                low, up = _band_2x2(a11, a22, lo, hi)
                if low > up + 1e-14:
                    continue
                up = max(up, low)
                for a12 in np.linspace(low, up, k if up > low else 1):
                    out.append(np.array([[a11, a12], [a12, a22]]))
    else:
        diff = hi - lo
        w, v = np.linalg.eigh(0.5 * (diff + diff.T))
        dh = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
        levels = np.linspace(0.0, 1.0, k)
        if k**n <= 4096:
            us = np.array(np.meshgrid(*([levels] * n), indexing="ij")).reshape(n, -1).T
        else:
            us = qmc.Sobol(n, scramble=False).random(4096)
        mats = [np.diag(u) for u in us]
        rng = np.random.default_rng(20240607)
        sob = qmc.Sobol(n, scramble=False).random_base2(int(np.ceil(np.log2(64 * k))))
        for _ in range(4):
            q, _r = np.linalg.qr(rng.standard_normal((n, n)))
            mats.extend(q @ np.diag(u) @ q.T for u in sob)
        out = [lo + dh @ m @ dh for m in mats]
    grid: list[SPDMatrix] = []
    seen: set[bytes] = set()
    for m in out:
        m = np.round(0.5 * (m + m.T), 15)
        key = m.tobytes()
        if key in seen:
            continue
        seen.add(key)
        if np.linalg.eigvalsh(m)[0] <= 0 or not in_interval(m, lo, hi, 1e-10):
            continue
        grid.append(SPDMatrix(m))
    return grid


def sup_xi_norm(spec: MarketSpec, k: int = 5) -> tuple[float, SPDMatrix]:
    """Largest ``|xi_hat(a)|`` over the interval grid, with its witness."""
    best, arg = -1.0, spec.a_hi
    for a in interval_grid(spec.a_lo, spec.a_hi, k):
        v = float(np.linalg.norm(xi_hat(spec, a)))
        if v > best:
            best, arg = v, a
    return best, arg


def validate(spec: MarketSpec, k: int = 5, eps_feas: float = EPS_FEAS) -> list[Violation]:
    """Check every market invariant; an empty list means the spec is usable."""
    out: list[Violation] = []
    if spec.d > spec.n:
        out.append(Violation("dimension", f"d = {spec.d} exceeds n = {spec.n}"))
    if spec.h < 0:
        out.append(Violation("sharpe_bound", f"h = {spec.h} is negative"))
    if spec.delta < 0:
        out.append(Violation("drift_radius", f"delta = {spec.delta} is negative"))
    if not spec.T > 0:
        out.append(Violation("horizon", f"T = {spec.T} must be positive"))
    if not loewner_leq(spec.a_lo, spec.a_hi):
        diff = spec.a_hi.entries - spec.a_lo.entries
        lam = np.linalg.eigvalsh(diff)[0]
        out.append(
            Violation("loewner", f"a_lo <= a_hi fails: smallest eigenvalue of a_hi - a_lo is {lam:.3e}", diff)
        )
    if spec.d <= spec.n:
        ev = np.linalg.eigvalsh(spec.sigma @ spec.sigma.T)
        if ev[0] <= max(ev[-1], 1.0) / TOL.max_condition:
            out.append(Violation("ellipticity", f"sigma sigma^T has smallest eigenvalue {ev[0]:.3e}"))
    if out:
        return out
    sup_xi, witness = sup_xi_norm(spec, k)
    total = sup_xi + spec.delta
    degenerate = spec.h <= _ZERO and total <= _ZERO
    if not degenerate and total > spec.h - eps_feas:
        out.append(
            Violation(
                "feasibility",
                f"sup|xi_hat| + delta = {sup_xi:.6g} + {spec.delta:.6g} = {total:.6g} is not below h = {spec.h:.6g}",
                witness.entries.copy(),
            )
        )
    return out


def prior_violations(spec: MarketSpec, prior: PriorSpec) -> list[Violation]:
    out = []
    if not in_interval(prior.a, spec.a_lo, spec.a_hi):
        out.append(Violation("prior_bounds", "a is outside [a_lo, a_hi]", prior.a.entries.copy()))
    if np.linalg.norm(prior.theta) > spec.delta + _ZERO:
        out.append(Violation("prior_theta", f"|theta| = {np.linalg.norm(prior.theta):.6g} exceeds delta"))
    return out
