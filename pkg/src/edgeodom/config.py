"""Run configuration: one flat key/value namespace covering every stage.

Config files are plain text, one `key = value` per line, `#` comments.
Unknown keys are rejected rather than ignored so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .features import FeatureConfig
from .odometry import OptimizerConfig
from .sweep_io import BeamModel
from .voxel_map import MapConfig

__all__ = ["RunConfig", "parse_config_text", "load_config", "apply_overrides"]


@dataclass(frozen=True)
class RunConfig:
    # ingestion
    r_min: float = 3.0
    r_max: float = 75.0
    beam_count: int = 64
    elevation_min_deg: float = -24.8
    elevation_max_deg: float = 2.0
    sort_azimuth: bool = False
    # features
    sectors: int = 8
    edges_per_sector: int = 10
    curvature_half_width: int = 5
    min_curvature: float = 0.01
    wrap_around: bool = False
    loam_style_curvature: bool = False
    # map
    s_xy: float = 25.0
    s_z: float = 20.0
    tau: int = 64
    voxel_leaf: float = 0.4
    local_radius_cells: int = 1
    recent_sweeps: int = 3
    # optimizer
    outer_iterations: int = 2
    knn_k: int = 5
    eigen_ratio: float = 3.0
    huber_delta: float = 0.3
    max_neighbor_distance: float = float("inf")
    use_weighting: bool = True
    jacobian: str = "analytic"
    # pipeline
    timestamp_period: float = 0.1
    mode: str = "single"  # or "pipelined"
    dataset: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.r_min < self.r_max:
            raise ConfigError(f"need 0 <= r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if self.mode not in ("single", "pipelined"):
            raise ConfigError(f"mode must be single|pipelined, got {self.mode!r}")

    def beam_model(self) -> BeamModel:
        return BeamModel(beam_count=self.beam_count,
                         elevation_min_deg=self.elevation_min_deg,
                         elevation_max_deg=self.elevation_max_deg)

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(sectors=self.sectors,
                             edges_per_sector=self.edges_per_sector,
                             curvature_half_width=self.curvature_half_width,
                             min_curvature=self.min_curvature,
                             wrap_around=self.wrap_around,
                             loam_style_curvature=self.loam_style_curvature)

    def map_config(self) -> MapConfig:
        return MapConfig(s_xy=self.s_xy, s_z=self.s_z, tau=self.tau,
                         voxel_leaf=self.voxel_leaf,
                         local_radius_cells=self.local_radius_cells,
                         recent_sweeps=self.recent_sweeps)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(outer_iterations=self.outer_iterations,
                               knn_k=self.knn_k, eigen_ratio=self.eigen_ratio,
                               huber_delta=self.huber_delta,
                               max_neighbor_distance=self.max_neighbor_distance,
                               use_weighting=self.use_weighting,
                               jacobian=self.jacobian,
                               r_min=self.r_min, r_max=self.r_max)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if kind == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base if base is not None else RunConfig()
    updates = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _parse_value(key, raw)
    return replace(cfg, **updates)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(), base)


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply CLI `key=value` pairs on top of a config."""
    updates = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        updates[key] = _parse_value(key, raw)
    return replace(cfg, **updates)
