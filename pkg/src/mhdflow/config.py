"""Run configuration: a flat dotted-key text format.

One assignment per line, `group.key = value`, with `#` starting a comment
(values therefore cannot contain a literal #).  Booleans accept
true/false/yes/no/1/0; strings may be bare or single/double quoted.  Keys
are grouped for the reader only -- the parser is flat and order-free, later
CLI overrides simply win.

Example::

    grid.n          = 64
    physics.m       = 20.0      # background strength
    physics.nu      = 0.05
    initial.family  = taylor_green
    initial.epsilon = 0.05
    time.dt         = 1e-3
    time.t_final    = 5.0
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Dict, Mapping

from .errors import ConfigError

_SCHEMES = ("etd_rk4", "imex_bdf2")
_FAMILIES = ("taylor_green", "random_symmetric", "from_file")


@dataclass
class SimConfig:
    """Everything one simulation run needs, with desk-scale defaults."""

    n: int = 64
    length: float = 2.0 * math.pi
    m: float = 20.0
    nu: float = 0.0
    kappa: float = 0.0
    family: str = "taylor_green"
    epsilon: float = 0.05
    seed: int = 0
    band: int = 4
    path: str = ""              # checkpoint to load when family = from_file
    dt: float = 1e-3
    t_final: float = 1.0
    record_every: int = 1
    state_every: int = 0        # 0 keeps only the first and last state
    scheme: str = "etd_rk4"
    odevity_project: bool = True
    pullback: bool = False
    companion: bool = False
    # fit window; negative means "choose per scenario" (decay defaults to the
    # late-time stretch, skipping the transient)
    window_lo: float = -1.0
    window_hi: float = -1.0
    # sweep block
    ms: str = "16,32,64,128"
    scaling: str = "fixed_energy"   # or fixed_data: epsilon held constant
    # quantitative gates (defaults are the shipped acceptance values)
    slope_v_h1: float = -1.25
    slope_v_h2: float = -0.75
    slope_b_h2: float = -0.25
    weighted_factor: float = 2.0
    separation: float = 0.25
    msweep_slope: float = -0.7
    msweep_slope_damped: float = -1.7
    damped_r2: float = 0.98
    rate_agreement: float = 0.3

    def validate(self) -> "SimConfig":
        checks = [
            (self.n >= 8 and self.n % 2 == 0, "grid.n must be even and >= 8"),
            (self.length > 0, "grid.length must be positive"),
            (self.m > 0, "physics.m must be positive"),
            (self.nu >= 0, "physics.nu must be nonnegative"),
            (self.kappa >= 0, "physics.kappa must be nonnegative"),
            (not (self.nu > 0 and self.kappa > 0),
             "physics.nu and physics.kappa cannot both be positive"),
            (self.family in _FAMILIES,
             f"initial.family must be one of {_FAMILIES}"),
            (self.epsilon >= 0, "initial.epsilon must be nonnegative"),
            (self.band >= 0, "initial.band must be nonnegative"),
            (self.family != "from_file" or bool(self.path),
             "initial.path is required when initial.family = from_file"),
            (self.dt > 0, "time.dt must be positive"),
            (self.t_final > 0, "time.t_final must be positive"),
            (self.record_every >= 1, "time.record_every must be >= 1"),
            (self.state_every >= 0, "time.state_every must be >= 0"),
            (self.scheme in _SCHEMES, f"time.scheme must be one of {_SCHEMES}"),
            (self.scaling in ("fixed_energy", "fixed_data"),
             "sweep.scaling must be fixed_energy or fixed_data"),
            (self.weighted_factor > 0, "gates.weighted_factor must be positive"),
            (0 < self.damped_r2 <= 1, "gates.damped_r2 must lie in (0, 1]"),
            (self.rate_agreement > 0, "gates.rate_agreement must be positive"),
        ]
        bad = [msg for ok, msg in checks if not ok]
        if bad:
            raise ConfigError("; ".join(bad))
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


# dotted key -> SimConfig field
_KEYMAP = {
    "grid.n": "n",
    "grid.length": "length",
    "physics.m": "m",
    "physics.nu": "nu",
    "physics.kappa": "kappa",
    "initial.family": "family",
    "initial.epsilon": "epsilon",
    "initial.seed": "seed",
    "initial.band": "band",
    "initial.path": "path",
    "time.dt": "dt",
    "time.t_final": "t_final",
    "time.record_every": "record_every",
    "time.state_every": "state_every",
    "time.scheme": "scheme",
    "run.odevity_project": "odevity_project",
    "run.pullback": "pullback",
    "run.companion": "companion",
    "fit.window_lo": "window_lo",
    "fit.window_hi": "window_hi",
    "sweep.ms": "ms",
    "sweep.scaling": "scaling",
    "gates.slope_v_h1": "slope_v_h1",
    "gates.slope_v_h2": "slope_v_h2",
    "gates.slope_b_h2": "slope_b_h2",
    "gates.weighted_factor": "weighted_factor",
    "gates.separation": "separation",
    "gates.msweep_slope": "msweep_slope",
    "gates.msweep_slope_damped": "msweep_slope_damped",
    "gates.damped_r2": "damped_r2",
    "gates.rate_agreement": "rate_agreement",
}


def config_to_mapping(cfg: SimConfig) -> Dict[str, object]:
    """Dotted-key echo of a config (inverse of the parser's view)."""
    return {key: getattr(cfg, name) for key, name in _KEYMAP.items()}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SimConfig)}


def parse_flat(text: str) -> Dict[str, str]:
    """Dotted-key assignments -> raw string values; duplicates are errors."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        out[key] = value
    return out


def _coerce(key: str, value: str, target: str):
    try:
        if target == "int":
            return int(value)
        if target == "float":
            return float(value)
        if target == "bool":
            low = value.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(value)
        return value
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {target}") from None


def config_from_mapping(raw: Mapping[str, str]) -> SimConfig:
    """Build and validate a SimConfig; unknown keys are rejected by name."""
    fields: Dict[str, object] = {}
    for key, value in raw.items():
        if key not in _KEYMAP:
            known = ", ".join(sorted(_KEYMAP))
            raise ConfigError(f"unknown key {key!r}; known keys: {known}")
        name = _KEYMAP[key]
        fields[name] = _coerce(key, value, str(_FIELD_TYPES[name]))
    return SimConfig(**fields).validate()


def load_config(path: str, overrides: Mapping[str, str] | None = None
                ) -> SimConfig:
    """Read a config file and apply dotted-key overrides on top."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = parse_flat(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if overrides:
        raw.update(overrides)
    return config_from_mapping(raw)
