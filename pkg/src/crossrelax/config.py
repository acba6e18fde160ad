"""Run configuration: flat ``key = value`` files plus command-line overrides."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .spin import NV_PARAMS, P1_PARAMS, SpinSystemParams

_SPIN_KEYS = ("D", "gamma_e", "gamma_n", "A_par", "A_perp", "Q", "nuclear_zeeman")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of the command-line workflows.

    Spin constants are overridden with ``nv.<name>`` / ``p1.<name>`` keys,
    e.g. ``p1.A_par = 114.0``.
    """

    nv: SpinSystemParams = NV_PARAMS
    p1: SpinSystemParams = P1_PARAMS
    B_min: float = 0.0
    B_max: float = 110.0
    B_step: float = 0.01
    window_min: float = 45.0
    window_max: float = 57.0
    scan_step: float = 0.005
    orientations: tuple = ("on", "off")
    cluster_tol: float = 0.15
    coupling: float = 0.1
    rabi: float = 1.0
    cutoff: float = 1.0
    t_max: float = 200.0
    n_times: int = 2000
    detuning_field: float = 1.0
    temperature: float = 295.0
    spacing_mode: str = "fixed"
    branch: int = -1
    output: str = "-"

    def __post_init__(self):
        if not self.B_max > self.B_min:
            raise ConfigError("B_max must exceed B_min")
        if not self.window_max > self.window_min:
            raise ConfigError("window_max must exceed window_min")
        for name in ("B_step", "scan_step", "cluster_tol", "cutoff", "t_max", "temperature"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.n_times < 2:
            raise ConfigError("n_times must be at least 2")
        if self.coupling < 0 or self.rabi < 0 or not (math.isfinite(self.coupling) and math.isfinite(self.rabi)):
            raise ConfigError("coupling and rabi must be finite and non-negative")
        if not self.orientations or any(o not in ("on", "off") for o in self.orientations):
            raise ConfigError(f"orientations must be a nonempty subset of on,off; got {self.orientations}")
        if self.spacing_mode not in ("fixed", "free"):
            raise ConfigError("spacing_mode must be 'fixed' or 'free'")
        if self.branch not in (-1, 1):
            raise ConfigError("branch must be -1 or 1")

    def echo(self) -> dict:
        """Flat key/value view for CSV headers."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, SpinSystemParams):
                for k in _SPIN_KEYS:
                    out[f"{f.name}.{k}"] = getattr(v, k)
            elif isinstance(v, tuple):
                out[f.name] = ",".join(v)
            else:
                out[f.name] = v
        return out


def _convert(key: str, raw: str, template):
    try:
        if isinstance(template, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
        if isinstance(template, tuple):
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(template).__name__}") from None


def apply_overrides(cfg: RunConfig, items: dict) -> RunConfig:
    """Return ``cfg`` with string-valued ``items`` applied; unknown keys raise ConfigError."""
    top, spin = {}, {"nv": {}, "p1": {}}
    names = {f.name for f in fields(RunConfig)}
    for key, raw in items.items():
        if "." in key:
            system, _, name = key.partition(".")
            if system not in spin or name not in _SPIN_KEYS:
                raise ConfigError(f"unknown key {key!r}")
            spin[system][name] = _convert(key, str(raw), getattr(getattr(cfg, system), name))
        elif key in names and key not in ("nv", "p1"):
            val = raw if not isinstance(raw, str) else _convert(key, raw, getattr(cfg, key))
            top[key] = val
        else:
            raise ConfigError(f"unknown key {key!r}")
    for system, kw in spin.items():
        if kw:
            try:
                top[system] = replace(getattr(cfg, system), **kw)
            except ValueError as exc:
                raise ConfigError(f"{system}: {exc}") from None
    try:
        return replace(cfg, **top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str, path=None) -> dict:
    items = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path or '<config>'}:{lineno}: expected 'key = value'")
        key = key.strip()
        if key in items:
            raise ConfigError(f"{path or '<config>'}:{lineno}: duplicate key {key!r}")
        items[key] = value.strip()
    return items


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (flags win)."""
    cfg = RunConfig()
    if path is not None:
        cfg = apply_overrides(cfg, parse_config(Path(path).read_text(encoding="utf-8"), path))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def config_keys() -> list[str]:
    keys = [f.name for f in dataclasses.fields(RunConfig) if f.name not in ("nv", "p1")]
    return keys + [f"{s}.{k}" for s in ("nv", "p1") for k in _SPIN_KEYS]
