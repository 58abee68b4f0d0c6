"""Command-line entry point.

Subcommands ``value``, ``hedge``, ``pde``, ``simulate``, ``check`` and
``sweep`` read a scenario file (``--config``), apply flag overrides and write
CSV or JSON either to ``--out DIR/<command>.<format>`` or to stdout.

Exit codes: 0 success, 1 a numerical check failed, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .checks import (
    closed_form_vs_pde, default_cells, projection_identities, saddle_oracle, supermartingale_robustness,
)
from .config import ScenarioConfig, apply_cli, config_hash, load
from .errors import ConfigError, GoodDealError
from .linalg import SPDMatrix
from .markovian import (
    PutScenario, bound_provider, closed_form_bound, gamma_sensitivity, good_deal_driver, rho_driver,
    robust_control_bound, solve_robust_pde, solve_semilinear_pde, static_put_value, superreplication_price,
)
from .montecarlo import default_pairs, supermartingale_test
from .pde import PDEParams

__all__ = ["main", "build_parser", "SWEEP_PARAMS"]

SWEEP_PARAMS = ("gamma", "h", "rho", "a2_hi", "b")


class Output:
    """Collects rows and writes them with the config hash and tool version."""

    def __init__(self, cmd: str, cfg: ScenarioConfig):
        self.cmd = cmd
        self.cfg = cfg
        self.meta = {"command": cmd, "config_hash": config_hash(cfg), "tool_version": __version__}

    def render(self, header: list[str], rows: list[list]) -> str:
        if self.cfg.outputs.format == "json":
            recs = [dict(zip(header, r)) for r in rows]
            return json.dumps({"meta": self.meta, "rows": recs}, indent=2, sort_keys=True, default=_jsonable) + "\n"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header + ["config_hash", "tool_version"])
        for r in rows:
            w.writerow([_cell(v) for v in r] + [self.meta["config_hash"], __version__])
        return buf.getvalue()

    def emit(self, header: list[str], rows: list[list]) -> None:
        text = self.render(header, rows)
        d = self.cfg.outputs.dir
        if d:
            os.makedirs(d, exist_ok=True)
            path = os.path.join(d, f"{self.cmd}.{self.cfg.outputs.format}")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v).__name__)


def _pde_params(cfg: ScenarioConfig) -> PDEParams:
    return PDEParams(nx=cfg.numerics.nx, nt=cfg.numerics.nt)


def _bound(s: PutScenario, cfg: ScenarioConfig) -> tuple[float, str]:
    """Valuation bound at ``(0, L0)``: closed form if valid, else the HJB grid."""
    if s.in_closed_form_regime:
        return float(closed_form_bound(s, 0.0, s.L0)), "closed_form"
    g = solve_robust_pde(s, _pde_params(cfg), k=cfg.numerics.hjb_grid)
    return float(g.value_at(0.0, s.L0)), "hjb_pde"


def _parse_a(text: str | None, s: PutScenario) -> SPDMatrix:
    if not text:
        return s.a_hi
    try:
        a11, a12, a22 = (float(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"--a expects 'a11,a12,a22', got {text!r}") from exc
    return SPDMatrix(np.array([[a11, a12], [a12, a22]]))


def _parse_values(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(p) for p in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"--values expects a comma separated list of numbers, got {text!r}") from exc


# ------------------------------------------------------------------ commands


def cmd_value(cfg: ScenarioConfig, args) -> int:
    s = cfg.put
    pi, method = _bound(s, cfg)
    static, _ = robust_control_bound(s, cfg.numerics.a_grid)
    row = [pi, float(static_put_value(s, s.a_hi)), float(static), float(superreplication_price(s, 0.0)), method]
    Output("value", cfg).emit(["pi_u_0", "pi_u_aBar", "pi_static", "V_hat", "method"], [row])
    return 0


def cmd_hedge(cfg: ScenarioConfig, args) -> int:
    s = cfg.put
    L = s.L0 if args.L is None else float(args.L)
    if not 0.0 <= args.t <= s.T:
        raise ConfigError(f"--t must lie in [0, T={s.T:g}]")
    if L <= 0:
        raise ConfigError("--L must be positive")
    a = _parse_a(args.a, s)
    prov = bound_provider(s, _pde_params(cfg))
    phi = np.asarray(prov.hedge(args.t, L, a), dtype=float)
    row = [args.t, L, phi[0], phi[1], phi[0] / s.sigma_S, float(prov.bound(args.t, L)),
           type(prov).__name__]
    Output("hedge", cfg).emit(["t", "L", "phi_1", "phi_2", "position_S", "pi", "method"], [row])
    return 0


def cmd_pde(cfg: ScenarioConfig, args) -> int:
    s = cfg.put
    params = _pde_params(cfg)
    if args.driver == "robust":
        g = solve_robust_pde(s, params, k=cfg.numerics.hjb_grid)
    else:
        drv = good_deal_driver(s) if args.driver == "good-deal" else rho_driver(s)
        g = solve_semilinear_pde(s, drv, params)
    Output("pde", cfg).emit(["t", "x", "v"], [list(r) for r in g.to_rows()])
    return 0


def cmd_simulate(cfg: ScenarioConfig, args) -> int:
    s, num = cfg.put, cfg.numerics
    provider = bound_provider(s, _pde_params(cfg))
    priors, kernels = default_cells(s)
    rep = supermartingale_test(
        s, priors, kernels, default_pairs(s.T), num.n_paths, num.seed, provider, n_steps=num.n_steps,
        hedge_multiplier=num.hedge_multiplier, block_size=num.block_size, threshold=num.threshold,
    )
    out = Output("simulate", cfg)
    if cfg.outputs.format == "json":
        text = rep.to_json(out.meta) + "\n"
        _write(cfg, "simulate", text)
    else:
        _write(cfg, "simulate", rep.to_csv({"config_hash": out.meta["config_hash"], "tool_version": __version__}))
    return 0 if rep.all_pass else 1


def _write(cfg: ScenarioConfig, cmd: str, text: str) -> None:
    d = cfg.outputs.dir
    if not d:
        sys.stdout.write(text)
        return
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, f"{cmd}.{cfg.outputs.format}"), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_check(cfg: ScenarioConfig, args) -> int:
    s, num = cfg.put, cfg.numerics
    results = [
        projection_identities(),
        saddle_oracle(),
        closed_form_vs_pde(s, _pde_params(cfg), tol=num.pde_rel_tol),
        supermartingale_robustness(
            s, n_paths=num.n_paths, seed=num.seed, n_steps=num.n_steps,
            hedge_multiplier=num.hedge_multiplier, threshold=num.threshold,
            provider=bound_provider(s, _pde_params(cfg)),
        ),
    ]
    # timings go to stderr only so the table stays reproducible
    rows = [[r.key, r.name, r.passed, r.detail.split("; runtime")[0]] for r in results]
    for r in results:
        print(r.line(), file=sys.stderr)
    Output("check", cfg).emit(["key", "check", "passed", "detail"], rows)
    failed = [f"[{r.key}] {r.name}" for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def cmd_sweep(cfg: ScenarioConfig, args) -> int:
    if args.param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {args.param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    values = _parse_values(args.values)
    header = ["param", "value", "bound", "hedge_atm_1", "hedge_atm_2", "gamma_sensitivity",
              "method", "nonincreasing", "nondecreasing"]
    rows = []
    for v in values:
        s = cfg.put.replace(**{args.param: v})
        _validate(s)
        pi, method = _bound(s, cfg)
        prov = bound_provider(s, _pde_params(cfg))
        phi = np.asarray(prov.hedge(0.0, s.strike, s.a_hi), dtype=float)
        sens = float(gamma_sensitivity(s, 0.0, s.L0)) if args.param == "gamma" and s.in_closed_form_regime else ""
        rows.append([args.param, v, pi, phi[0], phi[1], sens, method])
    bounds = np.array([r[2] for r in rows])
    steps = np.diff(bounds)
    tol = 1e-10 * max(1.0, float(np.abs(bounds).max())) if len(bounds) else 0.0
    noninc = bool(np.all(steps <= tol))
    nondec = bool(np.all(steps >= -tol))
    for r in rows:
        r += [noninc, nondec]
    Output("sweep", cfg).emit(header, rows)
    return 0


# ---------------------------------------------------------------------- main


def _validate(s: PutScenario) -> None:
    viol = s.validate()
    if viol:
        names = "; ".join(f"{v.condition}: {v.message}" for v in viol)
        raise ConfigError(f"invalid market ({names})")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (section.key = value lines)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory; stdout if omitted")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--grid", help="PDE grid as NxM (space x time)")
    common.add_argument("--paths", type=int, help="Monte Carlo paths")

    p = argparse.ArgumentParser(prog="gooddeal", description="Robust good-deal bounds and hedges.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)
    sub.add_parser("value", parents=[common], help="valuation bound at (0, L0)")
    h = sub.add_parser("hedge", parents=[common], help="robust hedge at (t, L)")
    h.add_argument("--t", type=float, default=0.0)
    h.add_argument("--L", type=float)
    h.add_argument("--a", help="volatility matrix 'a11,a12,a22' (default a_hi)")
    d = sub.add_parser("pde", parents=[common], help="full PDE grid as (t, x, v) rows")
    d.add_argument("--driver", choices=("good-deal", "rho", "robust"), default="good-deal")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo supermartingale test")
    sub.add_parser("check", parents=[common], help="numerical self-checks")
    w = sub.add_parser("sweep", parents=[common], help="bound over a parameter grid")
    w.add_argument("--param", required=True)
    w.add_argument("--values", default="", help="comma separated grid; empty for header only")
    return p


COMMANDS = {
    "value": cmd_value, "hedge": cmd_hedge, "pde": cmd_pde,
    "simulate": cmd_simulate, "check": cmd_check, "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load(args.config) if args.config else ScenarioConfig()
        cfg = apply_cli(cfg, seed=args.seed, paths=args.paths, grid=args.grid, out=args.out, fmt=args.format)
        _validate(cfg.put)
        return COMMANDS[args.cmd](cfg, args)
    except GoodDealError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
