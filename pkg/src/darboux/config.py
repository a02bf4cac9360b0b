"""Run configuration: TOML ingestion, validation, and hashing."""

from __future__ import annotations

import hashlib
import json
import math

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field

from .errors import ConfigError

__all__ = ["MetricSpec", "RunConfig", "load_config", "config_hash"]


@dataclass
class MetricSpec:
    """Closed-form metric components or a path to tabulated grids."""

    g11: str = "1"
    g12: str = "0"
    g22: str = "1"
    table: str = ""  # optional .npz with g11, g12, g22, bounds
    half_width: float = 0.5
    resolution: int = 129

    def validate(self):
        if self.resolution < 9:
            raise ConfigError("metric resolution must be at least 9 nodes")
        if self.half_width <= 0:
            raise ConfigError("chart half width must be positive")
        if not self.table:
            from .catalog import AnalyticMetric

            try:
                m = AnalyticMetric(self.g11, self.g12, self.g22)
                g11, g12, g22 = m.comps(0.0, 0.0)
            except Exception as exc:
                raise ConfigError(f"metric expressions invalid: {exc}") from exc
            if g11 <= 0 or g11 * g22 - g12**2 <= 0:
                raise ConfigError("metric is not positive definite at the origin")


@dataclass
class RunConfig:
    metric: MetricSpec = field(default_factory=MetricSpec)
    # schedule inputs
    eps: float = 0.05
    m_star: int = 4
    n_override: int = -1  # -1: measure the vanishing order from the grid
    m0: int = 0
    s0: int = 4
    delta: float = math.pi / 16
    gamma: float = -1.0  # -1: derived as 2 m + 1
    lam: float = 64.0
    rho_fallback: int = 2
    smoothing_base: float = 3.0
    max_iter: int = 10
    # sector geometry
    sigma: float = 1.0
    sector_resolution: int = 129
    # tolerances
    flatness_tol: float = 1e-3
    residual_target: float = 0.0
    zero_set_tol: float = 1e-12
    min_transversality: float = math.pi / 12
    # outputs
    out_dir: str = "runs"
    label: str = ""

    def validate(self):
        self.metric.validate()
        for name in ("eps", "delta", "lam", "sigma", "flatness_tol", "smoothing_base"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.eps < 1:
            raise ConfigError("eps must lie in (0, 1)")
        if self.m_star < 4:
            raise ConfigError("seed degree cap must be at least 4")
        if self.sector_resolution < 33:
            raise ConfigError("sector resolution must be at least 33")
        return self


def load_config(path) -> RunConfig:
    """Parse a TOML run configuration."""
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    metric = MetricSpec(**data.pop("metric", {}))
    known = {f for f in RunConfig.__dataclass_fields__ if f != "metric"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    cfg = RunConfig(metric=metric, **data)
    cfg.validate()
    return cfg


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
