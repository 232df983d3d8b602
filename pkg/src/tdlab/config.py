"""Flat ``key = value`` experiment configuration.

One experiment per file, ``#`` starts a comment, lists are comma separated.
Every key has a default, so an empty file is a valid config::

    env = baird
    algo = attd, gtd2, tdc
    lrs = default          # 2^-20, 2^-19, ..., 2^-1, 1
    n_steps = 20000
    n_seeds = 10
    gap = ln2              # ln2 | log:<c> | const:<c> | hln:<h>
    nu = constant          # or a float in (2/3, 1]: alpha_t = lr / (t+1)^nu
    radius = inf           # projection radius for pattd, or wstar:<factor>
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from tdlab.errors import ConfigError, TdlabIOError
from tdlab.learners import ALGOS, DIVERGENCE_GUARD
from tdlab.schedules import DEFAULT_C_TAU, DEFAULT_CHI_GRID, DEFAULT_TAU, GapFn, LrSchedule

DEFAULT_LRS = tuple(2.0**-k for k in range(20, 0, -1)) + (1.0,)


@dataclass(frozen=True)
class ExperimentConfig:
    env: tuple[str, ...] = ("baird",)
    algo: tuple[str, ...] = ("attd",)
    lrs: tuple[float, ...] = DEFAULT_LRS
    n_steps: int = 20000
    n_seeds: int = 10
    gap: str = "ln2"
    gaps: tuple[str, ...] = ("ln2", "log:5", "const:0")
    nu: float | None = None
    radius: str = "inf"
    guard: float = DIVERGENCE_GUARD
    seed: int = 0
    out: str = "out"
    tau: float = DEFAULT_TAU
    c_tau: float = DEFAULT_C_TAU
    c_alpha: float = 1.0
    check_nu: float = 1.0
    eta: float = 0.75
    m_max: int = 2000
    horizon: int = 100000
    chi_grid: tuple[float, ...] = DEFAULT_CHI_GRID

    def __post_init__(self) -> None:
        if not self.env:
            raise ConfigError("env list is empty")
        if not self.algo:
            raise ConfigError("algo list is empty")
        for a in self.algo:
            if a not in ALGOS:
                raise ConfigError(f"unknown algorithm {a!r}; known: {', '.join(ALGOS)}")
        if not self.lrs:
            raise ConfigError("learning-rate grid is empty")
        if any(not (lr > 0 and math.isfinite(lr)) for lr in self.lrs):
            raise ConfigError("learning rates must be positive and finite")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.n_seeds < 1:
            raise ConfigError(f"n_seeds must be >= 1, got {self.n_seeds}")
        GapFn.parse(self.gap)
        for g in self.gaps:
            GapFn.parse(g)
        if self.nu is not None:
            LrSchedule(1.0, self.nu)
        self.radius_factor()  # validates
        if not self.guard > 0:
            raise ConfigError("guard must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def radius_factor(self) -> tuple[str, float]:
        """('abs', B) or ('wstar', factor)."""
        text = self.radius.strip()
        try:
            if text.startswith("wstar:"):
                v = float(text[6:])
                kind = "wstar"
            else:
                v = float(text)
                kind = "abs"
        except ValueError:
            raise ConfigError(f"bad radius {self.radius!r}") from None
        if not v > 0:
            raise ConfigError(f"radius must be positive, got {self.radius!r}")
        return kind, v

    def gap_fn(self) -> GapFn:
        return GapFn.parse(self.gap)

    def with_(self, **kw) -> ExperimentConfig:
        return replace(self, **kw)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "nu":
                s = "constant" if v is None else repr(v)
            elif isinstance(v, tuple):
                s = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"


_TYPES = {
    "env": "strs", "algo": "strs", "gaps": "strs", "lrs": "floats", "chi_grid": "floats",
    "n_steps": "int", "n_seeds": "int", "seed": "int", "m_max": "int", "horizon": "int",
    "gap": "str", "radius": "str", "out": "str",
    "guard": "float", "tau": "float", "c_tau": "float", "c_alpha": "float",
    "check_nu": "float", "eta": "float", "nu": "nu",
}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "strs":
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "nu":
        return None if raw in ("", "constant", "none") else float(raw)
    if key == "lrs" and raw == "default":
        return DEFAULT_LRS
    return tuple(float(p) for p in raw.split(",") if p.strip())


def parse_config(text: str, **overrides) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TdlabIOError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)
