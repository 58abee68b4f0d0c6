"""Good-deal generators and the hedging saddle point.

Notation follows the scaled convention: ``z`` is already ``a^{1/2} Z`` and
hedges ``phi`` live in ``Im((sigma a^{1/2})^T)``. The single-prior generator

    F^theta(z) = -Pk(theta).Pk(z) + xi.Pi(z) - sqrt(h^2 - |xi + Pi(theta)|^2) |Pk(z)|

coincides with ``G(theta) = max_phi F(phi, theta)`` where

    F(phi, theta) = xi.phi - theta.(z - phi) - h |z - phi|,

and the robust generator is its infimum over the ball ``|theta| <= delta``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import InfeasibleTheta
from .linalg import Projector, SPDMatrix, make_projector
from .market import MarketSpec, strictly_below, xi_hat

__all__ = [
    "GenPoint",
    "SaddleResult",
    "MinmaxReport",
    "gen_theta",
    "gen_robust",
    "gen_rho",
    "phi_bar_of",
    "g_value",
    "saddle_objective",
    "minmax_check",
    "lipschitz_probe",
    "theta_ball_grid",
]

_ZERO = 1e-14


@dataclass(frozen=True, eq=False)
class GenPoint:
    """Arguments of a generator evaluation at a fixed prior ``a``."""

    z: np.ndarray
    proj: Projector
    xi: np.ndarray
    h: float
    delta: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).copy()
        xi = np.asarray(self.xi, dtype=float).copy()
        if z.shape != (self.proj.n,) or xi.shape != (self.proj.n,):
            raise ValueError(f"z and xi must be {self.proj.n}-vectors")
        if self.h < 0 or self.delta < 0:
            raise ValueError("h and delta must be nonnegative")
        if not strictly_below(float(np.linalg.norm(xi)) + self.delta, self.h):
            raise InfeasibleTheta(
                f"|xi| + delta = {np.linalg.norm(xi) + self.delta:.6g} is not below h = {self.h:.6g}"
            )
        z.setflags(write=False)
        xi.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "delta", float(self.delta))

    @classmethod
    def at(cls, spec: MarketSpec, a: SPDMatrix, z) -> "GenPoint":
        """Generator point for market ``spec`` under prior ``a``."""
        if not isinstance(a, SPDMatrix):
            a = SPDMatrix(a)
        return cls(z=z, proj=make_projector(spec.sigma, a), xi=xi_hat(spec, a), h=spec.h, delta=spec.delta)

    def with_z(self, z) -> "GenPoint":
        return GenPoint(z=z, proj=self.proj, xi=self.xi, h=self.h, delta=self.delta)

    @property
    def a(self) -> SPDMatrix:
        return self.proj.a

    @property
    def n(self) -> int:
        return self.proj.n


@dataclass(frozen=True)
class SaddleResult:
    phi_bar: np.ndarray
    theta_bar: np.ndarray
    theta_bar_im: np.ndarray
    value: float
    minmax_gap: float
    grid_value: float

    def hedge(self, a: SPDMatrix) -> np.ndarray:
        """Unscaled hedge ``a^{-1/2} phi_bar``; lies in ``Im(sigma^T)``."""
        return a.inv_sqrt @ self.phi_bar


class MinmaxReport(NamedTuple):
    gap: float
    bound: float
    inf_sup: float
    sup_inf: float


def _tilt(p: GenPoint, theta) -> tuple[np.ndarray, float]:
    """``xi + Pi(theta)`` and ``sqrt(h^2 - |xi + Pi(theta)|^2)``."""
    theta = np.asarray(theta, dtype=float)
    if np.linalg.norm(theta) > p.delta + 1e-12:
        raise InfeasibleTheta(f"|theta| = {np.linalg.norm(theta):.6g} exceeds delta = {p.delta:.6g}")
    r = p.xi + p.proj.im(theta)
    rr = float(r @ r)
    if not strictly_below(np.sqrt(rr), p.h):
        raise InfeasibleTheta(f"|xi + Pi(theta)| = {np.sqrt(rr):.6g} is not below h = {p.h:.6g}")
    return r, float(np.sqrt(max(p.h * p.h - rr, 0.0)))


def gen_theta(p: GenPoint, theta) -> float:
    """Single-prior good-deal generator ``F^theta(z)``."""
    _, s = _tilt(p, theta)
    kz = p.proj.ker(p.z)
    return float(-p.proj.ker(theta) @ kz + p.xi @ p.proj.im(p.z) - s * np.linalg.norm(kz))


def gen_rho(p: GenPoint) -> float:
    """Risk-measure generator ``-(h + delta)|z|``."""
    return -(p.h + p.delta) * float(np.linalg.norm(p.z))


def phi_bar_of(p: GenPoint, theta) -> np.ndarray:
    """Maximiser of ``phi -> F(phi, theta)`` over the hedgeable subspace."""
    r, s = _tilt(p, theta)
    pz = p.proj.im(p.z)
    k = float(np.linalg.norm(p.proj.ker(p.z)))
    if k == 0.0 or s == 0.0:
        # either nothing to hedge away or h = 0, where F is flat in phi
        return pz
    return pz + (k / s) * r


def g_value(p: GenPoint, theta) -> float:
    """Closed form of ``G(theta) = F(phi_bar(theta), theta)``."""
    return gen_theta(p, theta)


def saddle_objective(p: GenPoint, phi, theta) -> np.ndarray | float:
    """``F(phi, theta) = xi.phi - theta.(z - phi) - h|z - phi|``; batched over leading axes."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    w = p.z - phi
    out = phi @ p.xi - np.sum(theta * w, axis=-1) - p.h * np.linalg.norm(w, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def theta_ball_grid(n: int, delta: float, n_dir: int = 32, n_rad: int = 8, n_sobol: int = 4096) -> np.ndarray:
    """Coarse deterministic sample of the ball ``|theta| <= delta`` (includes 0)."""
    if delta == 0.0:
        return np.zeros((1, n))
    if n == 1:
        return np.linspace(-delta, delta, 2 * n_rad + 1)[:, None]
    if n == 2:
        ang = 2 * np.pi * np.arange(n_dir) / n_dir
        rad = delta * np.arange(1, n_rad + 1) / n_rad
        pts = (rad[:, None, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)[None]).reshape(-1, 2)
        return np.vstack([np.zeros((1, 2)), pts])
    u = qmc.Sobol(n + 1, scramble=False).random(n_sobol)[1:]
    g = np.clip(u[:, :n], 1e-12, 1 - 1e-12)
    dirs = ndtri(g)
    norms = np.linalg.norm(dirs, axis=1)
    keep = norms > 1e-9
    dirs = dirs[keep] / norms[keep, None]
    rad = delta * u[keep, n] ** (1.0 / n)
    return np.vstack([np.zeros((1, n)), dirs * rad[:, None]])


def _g_batch(p: GenPoint, thetas: np.ndarray) -> np.ndarray:
    r = p.xi + p.proj.im(thetas)
    s2 = p.h * p.h - np.sum(r * r, axis=1)
    kz = p.proj.ker(p.z)
    val = -p.proj.ker(thetas) @ kz + p.xi @ p.proj.im(p.z) - np.sqrt(np.clip(s2, 0.0, None)) * np.linalg.norm(kz)
    return np.where(s2 >= 0, val, np.inf)


def _unit(v: np.ndarray) -> np.ndarray | None:
    nv = float(np.linalg.norm(v))
    return None if nv <= 1e-13 else v / nv


def gen_robust(p: GenPoint) -> SaddleResult:
    """Robust generator ``F(z) = min_{|theta| <= delta} F^theta(z)`` with its saddle point.

    A coarse grid on the ball gives the starting value. ``G`` is convex, it
    decreases along ``Pk(z)`` and it decreases as ``|xi + Pi(theta)|``
    shrinks, so a minimiser lies on the sphere ``|theta| = delta`` in the
    span of ``Pk(z)`` and ``-xi``. The refinement is a bounded
    one-dimensional search over that arc. The result is canonical:
    ``theta_bar`` lies in the span of ``xi`` and ``Pk(z)``.
    """
    n = p.n
    zn = float(np.linalg.norm(p.z))
    if zn == 0.0:
        zero = np.zeros(n)
        return SaddleResult(zero, zero, zero, 0.0, 0.0, 0.0)
    # F is 1-homogeneous in z: solve at |z| = 1
    q = p.with_z(p.z / zn)
    grid = theta_ball_grid(n, p.delta)
    gvals = _g_batch(q, grid)
    i = int(np.argmin(gvals))
    best_theta, best_val = grid[i], float(gvals[i])
    grid_val = best_val

    k_dir = _unit(q.proj.ker(q.z))
    x_dir = _unit(q.xi)
    if p.delta > 0.0 and k_dir is not None:
        x_vec = x_dir if x_dir is not None else np.zeros(n)

        def theta_of(psi):
            return p.delta * (np.sin(psi) * x_vec + np.cos(psi) * k_dir)

        if x_dir is None:
            cand = theta_of(0.0)
        else:
            res = minimize_scalar(
                lambda psi: g_value(q, theta_of(psi)), bounds=(-0.5 * np.pi, 0.0), method="bounded",
                options={"xatol": 1e-12},
            )
            cand = theta_of(res.x)
            for edge in (-0.5 * np.pi, 0.0):
                if g_value(q, theta_of(edge)) < g_value(q, cand):
                    cand = theta_of(edge)
        cval = g_value(q, cand)
        if cval <= best_val + 1e-15:
            best_theta, best_val = cand, cval
    elif k_dir is None:
        # G is constant in theta: smallest-norm minimiser
        best_theta, best_val = np.zeros(n), g_value(q, np.zeros(n))

    phi = phi_bar_of(q, best_theta)
    sup_inf = float(q.xi @ phi - (p.h + p.delta) * np.linalg.norm(q.z - phi))
    return SaddleResult(
        phi_bar=phi * zn,
        theta_bar=best_theta,
        theta_bar_im=q.proj.im(best_theta),
        value=best_val * zn,
        minmax_gap=abs(best_val - sup_inf) * zn,
        grid_value=grid_val * zn,
    )


def _cartesian(k: int, dim: int, half: float) -> np.ndarray:
    ax = np.linspace(-half, half, k)
    return np.array(np.meshgrid(*([ax] * dim), indexing="ij")).reshape(dim, -1).T


def minmax_check(p: GenPoint, k_theta: int = 21, k_phi: int = 401, radius: float | None = None) -> MinmaxReport:
    """Brute-force both orders of optimisation of ``F(phi, theta)``.

    ``theta`` ranges over a Cartesian grid of the ball and ``phi`` over a
    box grid of the hedgeable subspace truncated at ``radius``. The
    returned bound is the worst-case discretisation error of the two grids;
    the true minmax identity holds iff ``gap <= bound`` is met as grids
    refine.
    """
    n, d = p.n, p.proj.rank
    zn = float(np.linalg.norm(p.z))
    slack = p.h - float(np.linalg.norm(p.xi)) - p.delta
    if radius is None:
        radius = 10.0 * (1.0 + zn) * p.h / slack if slack > 0 else 10.0 * (1.0 + zn)
    if p.delta == 0.0:
        thetas = np.zeros((1, n))
        d_theta = 0.0
    else:
        thetas = _cartesian(k_theta, n, p.delta)
        thetas = thetas[np.linalg.norm(thetas, axis=1) <= p.delta * (1 + 1e-12)]
        d_theta = 2 * p.delta / (k_theta - 1)
    coeffs = _cartesian(k_phi, d, radius)
    phis = coeffs @ p.proj.im_basis.T
    d_phi = 2 * radius / (k_phi - 1)

    sup_over_phi = np.full(len(thetas), -np.inf)
    inf_over_theta = np.empty(len(phis))
    chunk = max(1, 2_000_000 // max(len(thetas), 1))
    for lo in range(0, len(phis), chunk):
        block = phis[lo : lo + chunk]
        w = p.z - block
        base = block @ p.xi - p.h * np.linalg.norm(w, axis=1)
        vals = base[:, None] - w @ thetas.T
        inf_over_theta[lo : lo + chunk] = vals.min(axis=1)
        np.maximum(sup_over_phi, vals.max(axis=0), out=sup_over_phi)
    inf_sup = float(sup_over_phi.min())
    sup_inf = float(inf_over_theta.max())
    lip_theta = zn + radius
    lip_phi = float(np.linalg.norm(p.xi)) + p.delta + p.h
    bound = lip_theta * d_theta * np.sqrt(n) + lip_phi * d_phi * np.sqrt(d) / 2
    return MinmaxReport(gap=abs(inf_sup - sup_inf), bound=bound, inf_sup=inf_sup, sup_inf=sup_inf)


def lipschitz_probe(p: GenPoint, z1, z2) -> tuple[float, float]:
    """``(|F(z1) - F(z2)|, (delta + |xi| + h)|z1 - z2|)`` for the robust generator."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    f1 = gen_robust(p.with_z(z1)).value
    f2 = gen_robust(p.with_z(z2)).value
    return abs(f1 - f2), (p.delta + float(np.linalg.norm(p.xi)) + p.h) * float(np.linalg.norm(z1 - z2))
