"""Backward theta-scheme for one-dimensional pricing PDEs in log-spot.

Solves ``v_t + D(y) (v_yy - v_y) + N(y, v_y) = 0`` backward from a terminal
slice, where the diffusion coefficient ``D`` and the first-order term ``N``
may depend on the current iterate (for HJB-type equations). The second
order part is treated with Crank-Nicolson on fourth-order stencils after a few fully implicit
half-steps; ``N`` is handled by a predictor-corrector (Picard) sweep.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import GridError, StabilityError

__all__ = ["PDEParams", "PDEGrid", "stencils", "apply_stencil", "solve_backward"]

# coeffs(v) -> (diffusion at interior nodes, first-order term at interior nodes)
Coeffs = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class PDEParams:
    nx: int = 400
    nt: int = 400
    width: float = 8.0
    theta: float = 0.5
    rannacher: int = 2
    picard: int = 2
    y_nodes: tuple | None = None

    def __post_init__(self):
        if self.nx < 4 or self.nt < 1:
            raise GridError(f"grid too small: nx={self.nx}, nt={self.nt}")
        if not 0.5 <= self.theta <= 1.0:
            raise GridError("theta must lie in [0.5, 1]")


@dataclass(frozen=True, eq=False)
class PDEGrid:
    """Solution ``values[i, j] = v(t_nodes[i], x_nodes[j])``."""

    x_nodes: np.ndarray
    t_nodes: np.ndarray
    values: np.ndarray

    @property
    def y_nodes(self) -> np.ndarray:
        return np.log(self.x_nodes)

    def _t_weights(self, t: float):
        t = float(np.clip(t, self.t_nodes[0], self.t_nodes[-1]))
        i = int(np.clip(np.searchsorted(self.t_nodes, t, side="right") - 1, 0, len(self.t_nodes) - 2))
        w = (t - self.t_nodes[i]) / (self.t_nodes[i + 1] - self.t_nodes[i])
        return i, w

    def value_at(self, t: float, L) -> np.ndarray:
        """Bilinear interpolation in ``(t, log x)``."""
        i, w = self._t_weights(t)
        y = np.log(np.asarray(L, dtype=float))
        lo = np.interp(y, self.y_nodes, self.values[i])
        hi = np.interp(y, self.y_nodes, self.values[i + 1])
        return (1 - w) * lo + w * hi

    def delta_at(self, t: float, L) -> np.ndarray:
        """``dv/dx`` from the centred log-spot slope, interpolated like ``value_at``."""
        i, w = self._t_weights(t)
        y_nodes = self.y_nodes
        L = np.asarray(L, dtype=float)
        y = np.log(L)
        slope = [np.gradient(self.values[k], y_nodes) for k in (i, i + 1)]
        vy = (1 - w) * np.interp(y, y_nodes, slope[0]) + w * np.interp(y, y_nodes, slope[1])
        return vy / L

    def to_rows(self):
        for i, t in enumerate(self.t_nodes):
            for j, x in enumerate(self.x_nodes):
                yield float(t), float(x), float(self.values[i, j])


def stencils(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivative weights at interior nodes.

    Returns arrays of shape ``(len(y) - 2, 5)`` for offsets ``-2..2``. On a
    uniform grid the nodes two or more steps from the edge get fourth-order
    five-point weights; elsewhere (and on non-uniform grids) the usual
    three-point weights are used.
    """
    y = np.asarray(y, dtype=float)
    hm = y[1:-1] - y[:-2]
    hp = y[2:] - y[1:-1]
    s = hm + hp
    n = len(y) - 2
    d1 = np.zeros((n, 5))
    d2 = np.zeros((n, 5))
    d1[:, 1:4] = np.stack([-hp / (hm * s), (hp - hm) / (hm * hp), hm / (hp * s)], axis=1)
    d2[:, 1:4] = np.stack([2 / (hm * s), -2 / (hm * hp), 2 / (hp * s)], axis=1)
    step = np.diff(y)
    if n > 2 and np.allclose(step, step[0], rtol=1e-10, atol=0.0):
        h = step[0]
        d1[1:-1] = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12 * h)
        d2[1:-1] = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12 * h * h)
    return d1, d2


def apply_stencil(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply offset ``-2..2`` weights to ``v`` at interior nodes."""
    m = len(v)
    vp = np.concatenate([[0.0], v, [0.0]])
    return sum(w[:, k] * vp[k : k + m - 2] for k in range(5))


def check_nodes(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) < 5 or not np.all(np.isfinite(y)) or np.any(np.diff(y) <= 0):
        raise GridError("spatial nodes must be a finite, strictly increasing array of length >= 5")
    return y


def solve_backward(
    y: np.ndarray,
    t_nodes: np.ndarray,
    terminal: np.ndarray,
    lower: float,
    upper: float,
    coeffs: Coeffs,
    params: PDEParams,
    cap: float,
) -> np.ndarray:
    """Step the terminal slice back to ``t_nodes[0]``; returns all slices."""
    y = check_nodes(y)
    t_nodes = np.asarray(t_nodes, dtype=float)
    if np.any(np.diff(t_nodes) <= 0):
        raise GridError("time nodes must be strictly increasing")
    d1, d2 = stencils(y)
    lap = d2 - d1  # weights of v_yy - v_y
    m = len(y)
    out = np.empty((len(t_nodes), m))
    out[-1] = terminal
    v = terminal.astype(float).copy()

    def implicit_step(v_old, dt, theta):
        diff_old, n_old = coeffs(v_old)
        expl = v_old[1:-1] + (1 - theta) * dt * diff_old * apply_stencil(lap, v_old)
        guess = v_old
        for _ in range(max(params.picard, 1)):
            diff_new, n_new = coeffs(guess)
            rhs = expl + dt * ((1 - theta) * n_old + theta * n_new)
            a = -theta * dt * diff_new[:, None] * lap
            a[:, 2] += 1.0
            n = m - 2
            ab = np.zeros((5, n))
            rhs = rhs.copy()
            rows = np.arange(n)
            for k, off in enumerate(range(-2, 3)):
                cols = rows + off
                inside = (cols >= 0) & (cols < n)
                ab[2 - off, cols[inside]] = a[inside, k]
                rhs[cols == -1] -= a[cols == -1, k] * lower
                rhs[cols == n] -= a[cols == n, k] * upper
            new = np.empty(m)
            new[0], new[-1] = lower, upper
            new[1:-1] = solve_banded((2, 2), ab, rhs)
            guess = new
        return guess

    n_steps = len(t_nodes) - 1
    for k in range(n_steps - 1, -1, -1):
        dt = t_nodes[k + 1] - t_nodes[k]
        if n_steps - 1 - k < params.rannacher:
            v = implicit_step(v, 0.5 * dt, 1.0)
            v = implicit_step(v, 0.5 * dt, 1.0)
        else:
            v = implicit_step(v, dt, params.theta)
        if not np.all(np.isfinite(v)) or np.abs(v).max() > cap:
            raise StabilityError(f"solution blew up at t = {t_nodes[k]:.4g}")
        out[k] = v
    return out
