"""Run configuration: a flat ``key = value`` file overridden by command-line flags."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .bridge import BridgeDynamics
from .hazard import HazardModel
from .pde import Grid2D
from .policy import Preferences

CONFIG_ENV = "BIOAGE_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # Mortality pins.
    lambda0: float = 0.005
    lambdaT: float = 1.0
    kappa0: float = 60.0
    kappaT: float = 110.0
    # Biological-age dynamics.
    xi: float = 1.0
    sigma: float = 0.3
    # Preferences.
    gamma: float = 8.0
    rho: float = 0.025
    r: float = 0.025
    # PDE grid. ``below``/``above`` bound the age band around chronological
    # age (comoving frame) or around kappa0/kappaT (fixed frame).
    da: float = 0.1
    dt: float = 0.05
    below: float = 90.0
    above: float = 50.0
    frame: str = "comoving"
    # Monte Carlo.
    n_paths: int = 100_000
    mc_dt: float = 1 / 48
    seed: int = 0
    workers: int = 1
    out_dir: str = "."

    def model(self) -> HazardModel:
        return HazardModel(self.lambda0, self.lambdaT, self.kappa0, self.kappaT)

    def dyn(self, **overrides) -> BridgeDynamics:
        params = {"xi": self.xi, "sigma": self.sigma, **overrides}
        return BridgeDynamics.for_model(self.model(), **params)

    def prefs(self) -> Preferences:
        return Preferences(self.gamma, self.rho, self.r)

    def grid(self) -> Grid2D:
        return Grid2D.build(self.model(), da=self.da, dt=self.dt, below=self.below,
                            above=self.above, comoving=self.frame == "comoving")

    def validate(self):
        """Build every component once so bad values fail before any solve."""
        if self.frame not in ("comoving", "fixed"):
            raise ConfigError(f"frame must be 'comoving' or 'fixed', got {self.frame!r}")
        for name in ("da", "dt", "mc_dt"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_paths < 2 or self.workers < 1:
            raise ConfigError("n_paths must be at least 2 and workers at least 1")
        try:
            self.model()
            self.dyn()
            self.prefs()
            self.grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"float": float, "int": int, "str": str}


def coerce(key, value):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return _CASTS[_TYPES[key]](value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def parse_config_text(text) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = coerce(key, value)
    return values


def load_config(path=None, overrides=None) -> RunConfig:
    """Defaults, then the config file (``path`` or ``$BIOAGE_CONFIG``), then ``overrides``."""
    path = path or os.environ.get(CONFIG_ENV)
    values = {}
    if path:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = coerce(key, value)
    return replace(RunConfig(), **values).validate()
