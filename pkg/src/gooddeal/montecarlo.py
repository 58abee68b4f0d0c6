"""Path simulation and statistical checks of the tracking error.

Under a constant prior ``a``, drift point ``theta`` and valuation kernel
``lam`` the driving increments are

    dB = a^{1/2} ((lam + theta) dt + dW^Q),

and both assets are stepped exactly (lognormal, constant coefficients).
The tracking error of a hedge ``phi`` against a bound ``pi`` is

    R_t = pi(t, L_t) - pi(0, L_0) - sum phi^T (a^{1/2} xi_hat dt + dB),

with the sum taken at left points. A robust hedge keeps every ``R``
a supermartingale, which is checked with 3-standard-error tests on
increments.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError
from .linalg import SPDMatrix, make_projector
from .market import NGDKernel, PriorSpec, prior_violations, xi_hat, xi_theta
from .markovian import PutScenario

__all__ = [
    "PathBundle",
    "simulate",
    "tracking_error",
    "AlignedKernel",
    "MartingaleKernel",
    "TrackingRow",
    "TrackingReport",
    "supermartingale_test",
    "default_pairs",
]


@dataclass(frozen=True, eq=False)
class PathBundle:
    dt: float
    n_paths: int
    n_steps: int
    seed: int
    increments: np.ndarray  # dW^Q, shape (n_paths, n_steps, n)
    dB: np.ndarray  # shape (n_paths, n_steps, n)
    S_paths: np.ndarray  # shape (n_paths, n_steps + 1)
    L_paths: np.ndarray
    a: SPDMatrix
    theta: np.ndarray
    lam: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def covariance_check(self, n_se: float = 5.0) -> bool:
        """Pooled per-step covariance of ``dW`` is within ``n_se`` standard errors of ``dt I``."""
        w = self.increments.reshape(-1, self.increments.shape[-1]) / np.sqrt(self.dt)
        n = w.shape[0]
        cov = w.T @ w / n
        target = np.eye(w.shape[1])
        # var of w_i w_j is 2 on the diagonal and 1 off it
        se = np.sqrt(np.where(target > 0, 2.0, 1.0) / n)
        return bool(np.all(np.abs(cov - target) <= n_se * se))


def _block_normals(seed: int, block: int, shape) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, block]))
    return rng.standard_normal(shape)


def simulate(
    s: PutScenario,
    prior: PriorSpec,
    kernel: NGDKernel | None,
    n_paths: int,
    n_steps: int,
    seed: int,
    block_size: int = 10_000,
    first_block: int = 0,
) -> PathBundle:
    """Exact lognormal paths of ``S`` and ``L`` under the measure given by ``(prior, kernel)``.

    Normals are drawn per block of ``block_size`` paths from the substream
    ``(seed, block index)``, so any block is reproducible on its own.
    """
    spec = s.market
    bad = prior_violations(spec, prior)
    if bad:
        raise ConfigError("; ".join(v.message for v in bad))
    lam = np.zeros(spec.n) if kernel is None else np.asarray(kernel.lam, dtype=float)
    if kernel is not None:
        kernel.check(spec.h)
    dt = s.T / n_steps
    chunks = []
    done, block = 0, first_block
    while done < n_paths:
        m = min(block_size, n_paths - done)
        chunks.append(_block_normals(seed, block, (m, n_steps, spec.n)))
        done += m
        block += 1
    dW = np.concatenate(chunks, axis=0) * np.sqrt(dt)
    root = prior.a.sqrt_cache
    dB = (dW + (lam + prior.theta) * dt) @ root.T
    a = prior.a.entries
    c = s.c
    log_s = (s.b - 0.5 * s.sigma_S**2 * a[0, 0]) * dt + s.sigma_S * dB[..., 0]
    log_l = (s.gamma - 0.5 * s.beta**2 * float(c @ a @ c)) * dt + s.beta * (dB @ c)
    zeros = np.zeros((n_paths, 1))
    S = s.S0 * np.exp(np.concatenate([zeros, np.cumsum(log_s, axis=1)], axis=1))
    L = s.L0 * np.exp(np.concatenate([zeros, np.cumsum(log_l, axis=1)], axis=1))
    return PathBundle(
        dt=dt, n_paths=n_paths, n_steps=n_steps, seed=seed, increments=dW, dB=dB,
        S_paths=S, L_paths=L, a=prior.a, theta=np.asarray(prior.theta), lam=None if kernel is None else lam,
    )


def tracking_error(s: PutScenario, bundle: PathBundle, bound, hedge) -> np.ndarray:
    """Per-path tracking error at every time node; shape ``(n_paths, n_steps + 1)``."""
    t = bundle.times
    pi = np.empty_like(bundle.L_paths)
    for k, tk in enumerate(t):
        pi[:, k] = bound(min(tk, s.T), bundle.L_paths[:, k])
    drift = bundle.a.sqrt_cache @ xi_hat(s.market, bundle.a) * bundle.dt
    gains = np.empty((bundle.n_paths, bundle.n_steps))
    for k in range(bundle.n_steps):
        phi = np.broadcast_to(hedge(t[k], bundle.L_paths[:, k], bundle.a), (bundle.n_paths, drift.size))
        gains[:, k] = np.einsum("ij,ij->i", phi, bundle.dB[:, k] + drift)
    R = pi - pi[:, :1]
    R[:, 1:] -= np.cumsum(gains, axis=1)
    R[:, 0] = 0.0
    return R


# ------------------------------------------------------------------ kernels


@dataclass(frozen=True)
class AlignedKernel:
    """Kernel ``h a^{1/2}(Z - phi) / |a^{1/2}(Z - phi)|`` at ``(0, L0)``, the one that
    maximises the drift of the tracking error of the tested hedge ``phi``."""

    label: str = "aligned"

    def resolve(self, s: PutScenario, prior: PriorSpec, provider, multiplier: float = 1.0) -> NGDKernel:
        a = prior.a
        w = a.sqrt_cache @ (provider.Z(0.0, s.L0) - multiplier * provider.hedge(0.0, s.L0, a))
        nw = float(np.linalg.norm(w))
        lam = np.zeros_like(w) if nw == 0.0 else s.h * w / nw
        return NGDKernel(lam, self.label)


@dataclass(frozen=True)
class MartingaleKernel:
    """Kernel ``-xi_theta + sign * eta`` with ``eta`` in the kernel of ``sigma a^{1/2}``
    at the largest admissible radius."""

    sign: float = 1.0
    label: str = ""

    def resolve(self, s: PutScenario, prior: PriorSpec, provider=None, multiplier: float = 1.0) -> NGDKernel:
        spec = s.market
        xt = xi_theta(spec, prior.a, prior.theta)
        basis = make_projector(spec.sigma, prior.a).ker_basis
        e = basis[:, 0] if basis.shape[1] else np.zeros(spec.n)
        nz = np.nonzero(np.abs(e) > 1e-12)[0]
        if nz.size and e[nz[-1]] < 0:
            e = -e
        r = np.sqrt(max(spec.h**2 - float(xt @ xt), 0.0))
        label = self.label or ("martingale+" if self.sign > 0 else "martingale-")
        return NGDKernel(-xt + self.sign * r * e, label)


def _resolve(kernel, s, prior, provider, multiplier) -> NGDKernel:
    if isinstance(kernel, NGDKernel):
        return kernel
    return kernel.resolve(s, prior, provider, multiplier)


# ------------------------------------------------------------------- report


@dataclass(frozen=True)
class TrackingRow:
    prior: str
    kernel: str
    s: float
    t: float
    mean_increment: float
    std_error: float
    verdict: bool
    cond_max_z: float
    cond_verdict: bool
    n_paths: int
    lam: tuple = ()


@dataclass
class TrackingReport:
    rows: list[TrackingRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def pairs(self) -> list[tuple[float, float]]:
        return [(r.s, r.t) for r in self.rows]

    @property
    def mean_increment(self) -> np.ndarray:
        return np.array([r.mean_increment for r in self.rows])

    @property
    def std_error(self) -> np.ndarray:
        return np.array([r.std_error for r in self.rows])

    @property
    def verdict(self) -> list[bool]:
        return [r.verdict for r in self.rows]

    @property
    def all_pass(self) -> bool:
        return all(self.verdict)

    def cells(self) -> list[tuple[str, str]]:
        seen = []
        for r in self.rows:
            if (r.prior, r.kernel) not in seen:
                seen.append((r.prior, r.kernel))
        return seen

    def cell_pass(self, prior: str, kernel: str) -> bool:
        return all(r.verdict for r in self.rows if r.prior == prior and r.kernel == kernel)

    def to_csv(self, extra: dict | None = None) -> str:
        extra = extra or {}
        buf = io.StringIO()
        names = [f for f in TrackingRow.__dataclass_fields__ if f != "lam"] + list(extra)
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(names)
        for r in self.rows:
            d = asdict(r)
            w.writerow([_fmt(d[n]) for n in names if n in d] + [extra[k] for k in extra])
        return buf.getvalue()

    def to_json(self, extra: dict | None = None) -> str:
        rows = [asdict(r) for r in self.rows]
        return json.dumps({"meta": {**self.meta, **(extra or {})}, "rows": rows}, indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def default_pairs(T: float, k: int = 5) -> list[tuple[float, float]]:
    knots = np.linspace(0.0, T, k + 1)
    return [(float(knots[i]), float(knots[i + 1])) for i in range(k)]


def _conditional(inc: np.ndarray, Ls: np.ndarray, L0: float) -> float:
    """Largest fitted-mean z-score of a quadratic regression of ``inc`` on ``L_s``
    at five quantiles (HC0 covariance); the plain mean z-score when ``L_s`` is
    degenerate."""
    n = inc.size
    if np.ptp(Ls) <= 1e-12 * L0:
        return float(inc.mean() / (inc.std(ddof=1) / np.sqrt(n)))
    u = Ls / L0 - 1.0
    X = np.column_stack([np.ones(n), u, u * u])
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ (X.T @ inc)
    resid = inc - X @ beta
    meat = (X * resid[:, None] ** 2).T @ X
    cov = xtx_inv @ meat @ xtx_inv
    q = np.quantile(u, [0.1, 0.3, 0.5, 0.7, 0.9])
    Xq = np.column_stack([np.ones(5), q, q * q])
    fit = Xq @ beta
    se = np.sqrt(np.einsum("ij,jk,ik->i", Xq, cov, Xq))
    return float(np.max(fit / se))


def supermartingale_test(
    s: PutScenario,
    priors: Sequence[PriorSpec],
    kernels: Sequence,
    pairs: Sequence[tuple[float, float]],
    n_paths: int,
    seed: int,
    provider,
    n_steps: int = 100,
    hedge_multiplier: float = 1.0,
    block_size: int = 10_000,
    threshold: float = 3.0,
) -> TrackingReport:
    """Estimate ``E^Q[R_t - R_s]`` for every (prior, kernel, pair) cell.

    Every cell reuses the same normal draws (common random numbers). The
    hedge under test is ``hedge_multiplier`` times the provider's hedge.
    """
    dt = s.T / n_steps
    idx = []
    for a_, b_ in pairs:
        i, j = int(round(a_ / dt)), int(round(b_ / dt))
        if not (0 <= i < j <= n_steps) or abs(i * dt - a_) > 1e-9 or abs(j * dt - b_) > 1e-9:
            raise ConfigError(f"pair ({a_}, {b_}) is not on the time grid with {n_steps} steps")
        idx.append((i, j))

    def hedge(t, L, a):
        return hedge_multiplier * provider.hedge(t, L, a)

    report = TrackingReport(meta={"seed": seed, "n_paths": n_paths, "n_steps": n_steps,
                                  "hedge_multiplier": hedge_multiplier, "threshold": threshold})
    for pi_, prior in enumerate(priors):
        plabel = prior.label or f"prior{pi_}"
        for kernel in kernels:
            k = _resolve(kernel, s, prior, provider, hedge_multiplier)
            incs = [[] for _ in idx]
            Ls = [[] for _ in idx]
            done, block = 0, 0
            while done < n_paths:
                m = min(block_size, n_paths - done)
                bundle = simulate(s, prior, k, m, n_steps, seed, block_size=m, first_block=block)
                R = tracking_error(s, bundle, provider.bound, hedge)
                for q, (i, j) in enumerate(idx):
                    incs[q].append(R[:, j] - R[:, i])
                    Ls[q].append(bundle.L_paths[:, i])
                done += m
                block += 1
            for q, (i, j) in enumerate(idx):
                inc = np.concatenate(incs[q])
                mean = float(inc.mean())
                se = float(inc.std(ddof=1) / np.sqrt(inc.size))
                cz = _conditional(inc, np.concatenate(Ls[q]), s.L0)
                report.rows.append(TrackingRow(
                    prior=plabel, kernel=k.label or "kernel", s=i * dt, t=j * dt,
                    mean_increment=mean, std_error=se, verdict=mean <= threshold * se,
                    cond_max_z=cz, cond_verdict=cz <= threshold, n_paths=inc.size,
                    lam=tuple(float(x) for x in k.lam),
                ))
    return report
