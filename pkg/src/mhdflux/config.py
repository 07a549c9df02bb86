"""Run configuration: a flat key = value text format parsed into RunConfig.

Unknown keys are errors (they are almost always typos), values are typed by
the dataclass field they land in, and every module precondition that can be
checked from the numbers alone is checked at load time.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

__all__ = ["RunConfig", "parse_config", "load_config", "dump_config"]

INIT_KINDS = ("taylor-green-mhd", "abc", "zero")


@dataclass
class RunConfig:
    # grid
    n: int = 64
    L: float = 2.0 * math.pi
    # solver
    nu: float = 5e-3
    eta_m: float = 5e-3
    dt: float = 1e-2
    T: float = 3.0
    n_snapshots: int = 48
    init: str = "taylor-green-mhd"
    seed: int = 0
    amplitude_u: float = 1.2
    amplitude_b: float = 0.9
    perturbation: float = 0.1
    # analysis
    R0: float = 1.0
    # analysis-ball center; negative values mean "box center"
    center_x: float = -1.0
    center_y: float = -1.0
    center_z: float = -1.0
    rho: float = 0.8
    C0: float = 120.0
    K1: int = 64
    K2: int = 8
    beta: float = 0.1
    n_scales: int = 6
    n_ensembles: int = 4
    # assumption estimators
    assumption_samples: int = 4000
    n_centers: int = 5
    M_factor: float = 2.0
    C1_limit: float = 0.0  # 0 means "no limit, just report"
    C2: float = 0.0  # 0 means "no threshold"

    def validate(self) -> None:
        if self.n < 8 or self.n % 2:
            raise ConfigError("n must be even and >= 8")
        if self.L <= 0 or self.nu <= 0 or self.eta_m <= 0:
            raise ConfigError("L, nu, eta_m must be positive")
        if self.dt <= 0 or self.T <= 0:
            raise ConfigError("dt and T must be positive")
        if self.n_snapshots < 12:
            raise ConfigError("n_snapshots must be >= 12 for the time quadrature")
        if self.init not in INIT_KINDS:
            raise ConfigError(f"init must be one of {INIT_KINDS}")
        if not 0.75 < self.rho < 1.0:
            raise ConfigError("rho must lie in (3/4, 1)")
        if 2.0 * self.R0 + self.R0 ** (2.0 / 3.0) >= self.L / 2.0:
            raise ConfigError("2*R0 + R0^(2/3) must be < L/2 (analysis ball must fit)")
        if self.K1 < 1 or self.K2 < 1:
            raise ConfigError("K1 and K2 must be positive integers")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError("beta must lie in (0, 1)")
        if self.n_scales < 1 or self.n_ensembles < 1:
            raise ConfigError("n_scales and n_ensembles must be >= 1")
        if self.assumption_samples < 1 or self.n_centers < 1:
            raise ConfigError("assumption_samples and n_centers must be >= 1")

    @property
    def center(self) -> tuple[float, float, float]:
        half = self.L / 2.0
        return (
            self.center_x if self.center_x >= 0.0 else half,
            self.center_y if self.center_y >= 0.0 else half,
            self.center_z if self.center_z >= 0.0 else half,
        )


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _convert(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _convert(key, value))
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(RunConfig)]
    return "\n".join(lines) + "\n"
