"""Small dense symmetric linear algebra.

SPD square roots and the orthogonal projections onto ``Im((sigma a^{1/2})^T)``
and ``Ker(sigma a^{1/2})`` that every generator evaluation is built from.
Matrices here are tiny (n <= 8), so everything is plain numpy.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from functools import cached_property

import numpy as np

from .errors import DegenerateVolatility, NotSPD

__all__ = [
    "Tolerances",
    "TOL",
    "configure",
    "SPDMatrix",
    "spd_sqrt",
    "Projector",
    "make_projector",
    "loewner_leq",
    "in_interval",
]


@dataclass(frozen=True)
class Tolerances:
    symmetry: float = 1e-12
    eig_floor: float = 1e-12
    sqrt_check: float = 1e-10
    projector: float = 1e-10
    max_condition: float = 1e12
    loewner: float = 1e-12


TOL = Tolerances()


def configure(**overrides) -> Tolerances:
    """Override module tolerances, e.g. ``configure(eig_floor=1e-10)``.

    Returns the previous settings so callers can restore them.
    """
    global TOL
    known = {f.name for f in fields(Tolerances)}
    unknown = set(overrides) - known
    if unknown:
        raise KeyError(f"unknown tolerance(s): {sorted(unknown)}")
    previous = TOL
    TOL = replace(TOL, **overrides)
    return previous


def _symmetric_eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m - m.T).max() > TOL.symmetry * scale:
        raise NotSPD("matrix is not symmetric")
    return np.linalg.eigh(0.5 * (m + m.T))


@dataclass(frozen=True, eq=False)
class SPDMatrix:
    """Symmetric positive-definite matrix with a lazily cached square root.

    Construction validates symmetry and strict positivity; instances are
    immutable (the entries array is made read-only).
    """

    entries: np.ndarray = field(repr=True)

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise NotSPD(f"expected a square matrix, got shape {m.shape}")
        w, _ = _symmetric_eigh(m)
        if w[0] <= TOL.eig_floor * max(w[-1], 0.0) or w[-1] <= 0.0:
            raise NotSPD(f"smallest eigenvalue {w[0]:.3e} is below the floor")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def diag(cls, *values: float) -> "SPDMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def identity(cls, n: int) -> "SPDMatrix":
        return cls(np.eye(n))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.entries)

    @cached_property
    def sqrt_cache(self) -> np.ndarray:
        w, v = self.eig
        r = (v * np.sqrt(w)) @ v.T
        r = 0.5 * (r + r.T)
        r.setflags(write=False)
        return r

    @cached_property
    def inv_sqrt(self) -> np.ndarray:
        w, v = self.eig
        r = (v / np.sqrt(w)) @ v.T
        r = 0.5 * (r + r.T)
        r.setflags(write=False)
        return r

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, SPDMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


def spd_sqrt(a: SPDMatrix | np.ndarray) -> SPDMatrix:
    """Symmetric square root via eigendecomposition.

    Raises NotSPD when ``a`` is not symmetric or its smallest eigenvalue is
    at or below ``eig_floor * largest``.
    """
    if not isinstance(a, SPDMatrix):
        a = SPDMatrix(a)
    root = SPDMatrix(a.sqrt_cache)
    scale = max(np.abs(a.entries).max(), 1.0)
    if np.abs(root.entries @ root.entries - a.entries).max() > TOL.sqrt_check * scale:
        raise NotSPD("square root failed to reproduce the matrix")
    return root


@dataclass(frozen=True, eq=False)
class Projector:
    """Orthogonal projections onto Im((sigma a^{1/2})^T) and Ker(sigma a^{1/2})."""

    sigma: np.ndarray
    a: SPDMatrix
    p_im: np.ndarray
    p_ker: np.ndarray

    def im(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) @ self.p_im.T

    def ker(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) @ self.p_ker.T

    @property
    def n(self) -> int:
        return self.p_im.shape[0]

    @property
    def rank(self) -> int:
        return self.sigma.shape[0]

    @cached_property
    def im_basis(self) -> np.ndarray:
        """Orthonormal basis of the image, shape (n, d)."""
        q, _ = np.linalg.qr(self.a.sqrt_cache @ self.sigma.T)
        return q

    @cached_property
    def ker_basis(self) -> np.ndarray:
        """Orthonormal basis of the kernel, shape (n, n - d)."""
        w, v = np.linalg.eigh(self.p_ker)
        return v[:, w > 0.5]


def make_projector(sigma: np.ndarray, a: SPDMatrix | np.ndarray) -> Projector:
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if not isinstance(a, SPDMatrix):
        a = SPDMatrix(a)
    d, n = sigma.shape
    if a.n != n:
        raise ValueError(f"sigma has {n} columns but a is {a.n}x{a.n}")
    m = sigma @ a.sqrt_cache
    gram = m @ m.T
    if d > n or np.linalg.cond(gram) >= TOL.max_condition:
        raise DegenerateVolatility("sigma a sigma^T is numerically singular")
    p_im = m.T @ np.linalg.solve(gram, m)
    p_im = 0.5 * (p_im + p_im.T)
    p_ker = np.eye(n) - p_im
    p_im.setflags(write=False)
    p_ker.setflags(write=False)
    return Projector(sigma=sigma, a=a, p_im=p_im, p_ker=p_ker)


def loewner_leq(lo: SPDMatrix | np.ndarray, hi: SPDMatrix | np.ndarray, tol: float | None = None) -> bool:
    """True iff ``lo <= hi`` in the Loewner order (up to ``tol``)."""
    tol = TOL.loewner if tol is None else tol
    diff = np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)
    return bool(np.linalg.eigvalsh(0.5 * (diff + diff.T))[0] >= -tol)


def in_interval(a, a_lo, a_hi, tol: float | None = None) -> bool:
    return loewner_leq(a_lo, a, tol) and loewner_leq(a, a_hi, tol)
