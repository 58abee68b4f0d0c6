"""Scenario configuration: flat ``section.key = value`` text files.

Example::

    # default put scenario
    market.h = 0.3
    put.strike = 100.0
    numerics.n_paths = 100000
    outputs.format = csv
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .markovian import PutScenario

__all__ = ["Numerics", "Outputs", "ScenarioConfig", "parse", "serialize", "load", "config_hash"]

MARKET_KEYS = ("sigma_S", "b", "h", "delta", "a1_lo", "a2_lo", "a12_lo", "a1_hi", "a2_hi", "a12_hi")
PUT_KEYS = ("S0", "L0", "beta", "rho", "gamma", "strike", "T")


@dataclass(frozen=True)
class Numerics:
    nx: int = 400
    nt: int = 400
    n_paths: int = 100_000
    n_steps: int = 100
    seed: int = 20240607
    block_size: int = 10_000
    a_grid: int = 20
    hjb_grid: int = 5
    hedge_multiplier: float = 1.0
    threshold: float = 3.0
    pde_rel_tol: float = 1e-3


@dataclass(frozen=True)
class Outputs:
    dir: str = ""
    format: str = "csv"

    def __post_init__(self):
        if self.format not in ("csv", "json"):
            raise ConfigError(f"outputs.format must be csv or json, got {self.format!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    put: PutScenario = field(default_factory=PutScenario)
    numerics: Numerics = field(default_factory=Numerics)
    outputs: Outputs = field(default_factory=Outputs)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        """Override ``section.key`` style entries, e.g. ``{"numerics.seed": 3}``."""
        text = serialize(self) + "".join(f"{k} = {v}\n" for k, v in kw.items())
        return parse(text)


def _coerce(kind, raw: str, key: str):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from exc


def _types(cls) -> dict:
    # annotations are strings under postponed evaluation
    hints = {"int": int, "float": float, "str": str}
    return {f.name: hints[f.type] for f in fields(cls)}


def parse(text: str) -> ScenarioConfig:
    """Read a config; unknown keys and malformed lines raise ConfigError."""
    num_t, out_t = _types(Numerics), _types(Outputs)
    put, num, out = {}, {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        section, _, name = key.partition(".")
        if section == "market" and name in MARKET_KEYS:
            put[name] = _coerce(float, raw, key)
        elif section == "put" and name in PUT_KEYS:
            put[name] = _coerce(float, raw, key)
        elif section == "numerics" and name in num_t:
            num[name] = _coerce(num_t[name], raw, key)
        elif section == "outputs" and name in out_t:
            out[name] = raw
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return ScenarioConfig(put=PutScenario(**put), numerics=Numerics(**num), outputs=Outputs(**out))


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def serialize(cfg: ScenarioConfig) -> str:
    lines = []
    for key in MARKET_KEYS:
        lines.append(f"market.{key} = {_fmt(getattr(cfg.put, key))}")
    for key in PUT_KEYS:
        lines.append(f"put.{key} = {_fmt(getattr(cfg.put, key))}")
    for f in fields(Numerics):
        lines.append(f"numerics.{f.name} = {_fmt(getattr(cfg.numerics, f.name))}")
    for f in fields(Outputs):
        lines.append(f"outputs.{f.name} = {getattr(cfg.outputs, f.name)}")
    return "\n".join(lines) + "\n"


def load(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def config_hash(cfg: ScenarioConfig) -> str:
    """Short digest of the scenario; the output directory does not enter it."""
    text = serialize(replace(cfg, outputs=replace(cfg.outputs, dir="")))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def apply_cli(cfg: ScenarioConfig, seed=None, paths=None, grid=None, out=None, fmt=None) -> ScenarioConfig:
    num, outs = cfg.numerics, cfg.outputs
    if seed is not None:
        num = replace(num, seed=int(seed))
    if paths is not None:
        num = replace(num, n_paths=int(paths))
    if grid is not None:
        try:
            nx, nt = (int(p) for p in grid.lower().split("x"))
        except ValueError as exc:
            raise ConfigError(f"--grid expects NxM, got {grid!r}") from exc
        num = replace(num, nx=nx, nt=nt)
    if out is not None:
        outs = replace(outs, dir=out)
    if fmt is not None:
        outs = Outputs(dir=outs.dir, format=fmt)
    return replace(cfg, numerics=num, outputs=outs)
