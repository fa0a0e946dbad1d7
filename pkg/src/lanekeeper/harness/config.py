"""Workbench configuration: one flat key=value file covering every
tunable default, plus the per-episode settings."""

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path


@dataclass
class Config:
    # control
    speed: float = 1.0
    speed_cap: float = 8.9
    yaw_cap: float = 1.5
    yaw_gain: float = 1.0
    deadband_px: float = 10.0
    rate_delta: float = 0.1
    publish_divider: int = 1
    lost_lane_ticks: int = 10
    # red marker / lap counting
    red_r_min: int = 120
    red_dominance: int = 50
    red_tau_on: float = 0.05
    red_tau_off: float = 0.01
    re_arm_distance: float = 10.0
    # perception
    segmentation: str = "classical"  # classical | oracle
    blur_kernel: int = 3
    thresh_min_frac: float = 0.01
    thresh_max_frac: float = 0.10
    hough_rho: float = 1.0
    hough_theta_deg: float = 1.0
    hough_votes: int = 30
    hough_min_length: float = 70.0
    hough_max_gap: int = 4
    slope_min: float = 0.25
    slope_max: float = 100.0
    roi_top_frac: float = 0.5
    lane_width_px: float = 280.0
    # track
    straight_length: float = 6.0
    corner_radius: float = 4.0
    lane_width: float = 3.0
    line_width: float = 0.1
    line_fade: float = 1.0
    # camera
    camera_width: int = 640
    camera_height: int = 480
    camera_hfov_deg: float = 70.0
    camera_height_m: float = 1.6
    camera_pitch_deg: float = 12.0
    camera_fps: float = 25.0
    # e2e
    record_stride: int = 3
    train_epochs: int = 300
    train_lr: float = 0.02
    ensemble_brightness_bias: float = 20.0
    ensemble_contrast_gain: float = 1.15
    outlier_delta: float = 0.3
    ensemble_rate_delta: float = 0.1
    # teleop
    teleop_max_speed: float = 2.0
    teleop_stale_ms: float = 500.0
    frame_stream_hz: float = 15.0
    # episode defaults
    tick: float = 0.02
    lap_target: int = 5
    max_ticks: int = 60000

    @classmethod
    def from_file(cls, path) -> "Config":
        return cls().with_overrides(parse_config_file(path))

    def with_overrides(self, overrides: dict) -> "Config":
        fields = {f.name: f for f in dataclasses.fields(self)}
        values = dataclasses.asdict(self)
        for key, raw in overrides.items():
            if key not in fields:
                raise KeyError(f"unknown config key {key!r}")
            ftype = fields[key].type
            if ftype in ("int", int):
                values[key] = int(raw)
            elif ftype in ("float", float):
                values[key] = float(raw)
            else:
                values[key] = str(raw)
        return Config(**values)

    @property
    def camera_hfov(self) -> float:
        return math.radians(self.camera_hfov_deg)

    @property
    def camera_pitch(self) -> float:
        return math.radians(self.camera_pitch_deg)

    @property
    def hough_theta(self) -> float:
        return math.radians(self.hough_theta_deg)


def parse_config_file(path) -> dict:
    """Flat `key = value` lines; `#` starts a comment; blank lines ignored."""
    overrides = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


@dataclass
class EpisodeConfig:
    controller: str = "hybrid"  # hybrid | e2e | teleop
    lane: str = "outer"
    weather: str = "clear"
    seed: int = 0
    lap_target: int = 5
    max_ticks: int = 60000
    tick: float = 0.02
    model_path: str | None = None
    record_path: str | None = None

    def __post_init__(self):
        if self.controller not in ("hybrid", "e2e", "teleop"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.lane not in ("inner", "outer"):
            raise ValueError(f"lane must be inner or outer, got {self.lane!r}")
        if self.lap_target < 1:
            raise ValueError("lap_target must be >= 1")
        if self.tick <= 0:
            raise ValueError("tick must be positive")
