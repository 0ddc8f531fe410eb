"""Pipeline configuration: dataclasses with JSON (de)serialization.

The JSON file uses exactly these field names; nested sections mirror the
nested dataclasses, e.g.::

    {
      "grid_step": 1e-4,
      "grid_size": 3,
      "ransac": {"threshold": 3.0, "max_iters": 2000, "seed": 0},
      "ecc": {"max_iters": 50, "eps": 1e-6, "window": 41},
      "lane_ranges": [{"label": "white", "low": [190,180,180], "high": [255,255,255]}]
    }

Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .lanes import DEFAULT_RANGES, ColorRange


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HarrisConfig:
    max_points: int = 500
    min_distance: float = 10.0
    k: float = 0.04
    sigma: float = 1.0
    rel_threshold: float = 0.01


@dataclass(frozen=True)
class RansacConfig:
    threshold: float = 3.0
    max_iters: int = 2000
    seed: int = 0
    confidence: float = 0.995


@dataclass(frozen=True)
class EccConfig:
    max_iters: int = 50
    eps: float = 1e-6
    window: int = 41


@dataclass(frozen=True)
class PipelineConfig:
    grid_step: float = 1e-4
    grid_size: int = 3
    angle_half_range: float = 5.0
    angle_iters: int = 5
    ratio: float = 0.7
    harris: HarrisConfig = field(default_factory=HarrisConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    ecc: EccConfig = field(default_factory=EccConfig)
    lane_ranges: tuple[ColorRange, ...] = DEFAULT_RANGES
    canny_low: float = 50.0
    canny_high: float = 150.0
    edge_radius: int = 3
    vicinity: int = 2
    min_inliers: int = 15
    fov: float = 90.0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.grid_step <= 0:
            raise ConfigError(f"grid_step must be > 0, got {self.grid_step}")
        if self.grid_size < 1 or self.grid_size % 2 == 0:
            raise ConfigError(f"grid_size must be odd and >= 1, got {self.grid_size}")
        if self.angle_half_range <= 0:
            raise ConfigError(f"angle_half_range must be > 0, got {self.angle_half_range}")
        if self.angle_iters < 1:
            raise ConfigError(f"angle_iters must be >= 1, got {self.angle_iters}")
        if not 0.0 < self.ratio < 1.0:
            raise ConfigError(f"ratio must be in (0, 1), got {self.ratio}")
        if self.ecc.window < 1 or self.ecc.window % 2 == 0:
            raise ConfigError(f"ecc.window must be odd and >= 1, got {self.ecc.window}")
        if not 0 < self.canny_low < self.canny_high:
            raise ConfigError("canny thresholds must satisfy 0 < low < high")
        if self.vicinity < 0:
            raise ConfigError(f"vicinity must be >= 0, got {self.vicinity}")
        if self.min_inliers < 4:
            raise ConfigError(f"min_inliers must be >= 4, got {self.min_inliers}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        if name == "lane_ranges":
            kwargs[name] = tuple(_color_range(v, f"{where}.lane_ranges[{i}]") for i, v in enumerate(value))
        elif name in ("harris", "ransac", "ecc"):
            sub = {"harris": HarrisConfig, "ransac": RansacConfig, "ecc": EccConfig}[name]
            kwargs[name] = _build(sub, value, f"{where}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _color_range(data: dict, where: str) -> ColorRange:
    if not isinstance(data, dict) or set(data) != {"label", "low", "high"}:
        raise ConfigError(f"{where}: expected keys label, low, high")
    try:
        return ColorRange(str(data["label"]), tuple(data["low"]), tuple(data["high"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "config")


def load(path: str | Path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return from_dict(data)


def to_dict(cfg: PipelineConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["lane_ranges"] = [
        {"label": r.label, "low": list(r.low), "high": list(r.high)} for r in cfg.lane_ranges
    ]
    return out


def save(cfg: PipelineConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
