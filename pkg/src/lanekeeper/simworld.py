"""Deterministic 2D world: rounded-square two-lane track, unicycle
kinematics, pinhole ground-plane camera, weather perturbations, and
ground-truth signals (cross-track error, oracle line mask).

World frame: meters, y up, heading counter-clockwise from +x.  Travel
direction around the track is counter-clockwise.  Image frame: origin
top-left, y down.
"""

import functools
import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .control import TwistCommand
from .imaging import ImageBuffer

ASPHALT_VAL = 90.0
OFF_TRACK_VAL = 74.0
LINE_WHITE = 235.0
MARKER_RGB = (200.0, 30.0, 30.0)
SKY_TOP = 84.0
SKY_HORIZON = 132.0
TEXTURE_SEED = 0x5EED5EED
TEXTURE_AMP = 6.0
MAX_GROUND_RANGE = 500.0
MARKER_LENGTH = 0.6  # stripe extent along the travel direction


@dataclass(frozen=True)
class TrackSpec:
    straight_length: float = 6.0
    corner_radius: float = 4.0
    lane_width: float = 3.0
    line_width: float = 0.1
    lane: str = "outer"
    marker_arc_positions: tuple = ()  # ((arc_s, lane_tag), ...); default set in __post_init__
    line_fade: float = 1.0

    def __post_init__(self):
        if self.corner_radius <= 0:
            raise ValueError("corner_radius must be positive")
        if not (self.lane_width > self.line_width > 0):
            raise ValueError("need lane_width > line_width > 0")
        if self.lane not in ("inner", "outer"):
            raise ValueError(f"lane must be inner or outer, got {self.lane!r}")
        if self.corner_radius <= self.lane_width:
            raise ValueError("corner_radius must exceed lane_width for the inner line")
        if not self.marker_arc_positions:
            mid_bottom = self.straight_length / 2.0
            mid_top = 2 * self.straight_length + math.pi * self.corner_radius + self.straight_length / 2.0
            object.__setattr__(self, "marker_arc_positions",
                               ((mid_bottom, "outer"), (mid_top, "inner")))
        for s, tag in self.marker_arc_positions:
            if tag not in ("inner", "outer"):
                raise ValueError(f"bad marker lane tag {tag!r}")
            seg = _segment_of(self, s)
            seg_end = _segment_of(self, s + MARKER_LENGTH)
            if seg % 2 != 0 or seg_end != seg:
                raise ValueError("markers must lie fully on straight sections")

    @property
    def perimeter(self) -> float:
        return 4 * self.straight_length + 2 * math.pi * self.corner_radius

    @property
    def lane_offset(self) -> float:
        """Signed centerline offset of the active lane from the middle line."""
        return self.lane_width / 2.0 if self.lane == "outer" else -self.lane_width / 2.0


@dataclass(frozen=True)
class VehiclePose:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    odometer: float = 0.0


@dataclass(frozen=True)
class CameraModel:
    native_width: int = 2064
    native_height: int = 1544
    output_width: int = 640
    output_height: int = 480
    horizontal_fov: float = math.radians(70.0)
    mount_height: float = 1.6
    pitch_down: float = math.radians(12.0)
    max_fps: float = 37.0
    fps: float = 25.0

    def __post_init__(self):
        if self.output_width > self.native_width or self.output_height > self.native_height:
            raise ValueError("output resolution exceeds the native sensor")
        if self.pitch_down <= 0:
            raise ValueError("pitch_down must be positive so the ground is visible")
        if not (0 < self.fps <= self.max_fps):
            raise ValueError(f"fps must be in (0, {self.max_fps}]")

    @property
    def focal_px(self) -> float:
        return (self.output_width / 2.0) / math.tan(self.horizontal_fov / 2.0)


@dataclass(frozen=True)
class WeatherCondition:
    name: str = "clear"
    brightness_gain: float = 1.0
    contrast: float = 1.0
    noise_sigma: float = 0.0
    shadow_polygons: tuple = ()  # ((4 CCW (x, y) corners), attenuation)
    glare_blobs: tuple = ()      # (cx_px, cy_px, radius_px, additive)
    line_fade: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.brightness_gain <= 0 or self.contrast <= 0:
            raise ValueError("gains must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not (0.0 <= self.line_fade <= 1.0):
            raise ValueError("line_fade must be within [0, 1]")


WEATHER_PRESETS = {
    "clear": dict(),
    "overcast": dict(
        brightness_gain=0.75, contrast=0.9, noise_sigma=3.0, line_fade=0.9,
        shadow_polygons=(
            (((-30.0, -30.0), (2.0, -30.0), (2.0, 2.0), (-30.0, 2.0)), 0.8),
            (((3.0, 3.0), (30.0, 3.0), (30.0, 30.0), (3.0, 30.0)), 0.85),
        )),
    "rain": dict(
        brightness_gain=0.8, contrast=0.85, noise_sigma=12.0, line_fade=0.6,
        shadow_polygons=(
            (((-30.0, 1.0), (30.0, 1.0), (30.0, 30.0), (-30.0, 30.0)), 0.9),
        )),
    "glare": dict(
        brightness_gain=1.4, contrast=1.05, noise_sigma=2.0,
        glare_blobs=((160.0, 60.0, 45.0, 120.0),
                     (480.0, 90.0, 30.0, 100.0),
                     (320.0, 30.0, 60.0, 90.0))),
    "dusk": dict(brightness_gain=0.4, contrast=0.95, noise_sigma=4.0, line_fade=0.85),
}


def weather_preset(name: str, rng_seed: int = 0) -> WeatherCondition:
    if name not in WEATHER_PRESETS:
        raise ValueError(f"unknown weather preset {name!r}; "
                         f"choose from {sorted(WEATHER_PRESETS)}")
    return WeatherCondition(name=name, rng_seed=rng_seed, **WEATHER_PRESETS[name])


# ---------------------------------------------------------------- kinematics

def step(pose: VehiclePose, cmd: TwistCommand, dt: float = 0.02) -> VehiclePose:
    """Advance the unicycle one tick with exact constant-twist integration."""
    v = cmd.linear_x
    w = cmd.angular_z
    th = pose.heading
    if abs(w) < 1e-12:
        x = pose.x + v * math.cos(th) * dt
        y = pose.y + v * math.sin(th) * dt
        th_new = th + w * dt
    else:
        th_new = th + w * dt
        x = pose.x + (v / w) * (math.sin(th_new) - math.sin(th))
        y = pose.y + (v / w) * (math.cos(th) - math.cos(th_new))
    th_new = math.remainder(th_new, math.tau)
    if th_new <= -math.pi:
        th_new += math.tau
    return VehiclePose(x, y, th_new, pose.odometer + abs(v) * dt)


# ------------------------------------------------------------ track geometry

def _segment_of(track: TrackSpec, s: float) -> int:
    """Segment index 0..7 (even = straight, odd = corner) for arc position s."""
    L = track.straight_length
    A = math.pi * track.corner_radius / 2.0
    s = s % track.perimeter
    bounds = [L, A, L, A, L, A, L, A]
    for i, b in enumerate(bounds):
        if s < b:
            return i
        s -= b
    return 7


def point_at(track: TrackSpec, s: float, offset: float = 0.0):
    """(x, y, heading) at arc position s on the middle path, displaced
    outward by `offset` meters (negative = toward the track center)."""
    L = track.straight_length
    R = track.corner_radius
    A = math.pi * R / 2.0
    c = L / 2.0 + R
    s = s % track.perimeter
    spans = [
        ("bottom", L), ("br", A), ("right", L), ("tr", A),
        ("top", L), ("tl", A), ("left", L), ("bl", A),
    ]
    for name, span in spans:
        if s >= span:
            s -= span
            continue
        if name == "bottom":
            return (-L / 2.0 + s, -c - offset, 0.0)
        if name == "right":
            return (c + offset, -L / 2.0 + s, math.pi / 2.0)
        if name == "top":
            return (L / 2.0 - s, c + offset, math.pi)
        if name == "left":
            return (-c - offset, L / 2.0 - s, -math.pi / 2.0)
        centers = {"br": (L / 2.0, -L / 2.0), "tr": (L / 2.0, L / 2.0),
                   "tl": (-L / 2.0, L / 2.0), "bl": (-L / 2.0, -L / 2.0)}
        starts = {"br": -math.pi / 2.0, "tr": 0.0, "tl": math.pi / 2.0, "bl": math.pi}
        cx, cy = centers[name]
        phi = starts[name] + s / R
        heading = math.remainder(phi + math.pi / 2.0, math.tau)
        return (cx + (R + offset) * math.cos(phi), cy + (R + offset) * math.sin(phi), heading)
    raise AssertionError("unreachable")


def signed_distance(track: TrackSpec, x: float, y: float) -> float:
    """Signed distance from the middle line; positive = outward."""
    b = track.straight_length / 2.0
    qx = abs(x) - b
    qy = abs(y) - b
    mx = max(qx, 0.0)
    my = max(qy, 0.0)
    return math.sqrt(mx * mx + my * my) + min(max(qx, qy), 0.0) - track.corner_radius


def cross_track_error(track: TrackSpec, pose: VehiclePose) -> float:
    """Signed lateral offset from the active lane centerline; positive =
    left of the centerline in the (counter-clockwise) travel direction."""
    sd = signed_distance(track, pose.x, pose.y)
    return track.lane_offset - sd


def start_pose(track: TrackSpec, behind: float = 2.0) -> VehiclePose:
    """Pose on the active lane centerline `behind` meters before its marker."""
    marker_s = None
    for s, tag in track.marker_arc_positions:
        if tag == track.lane:
            marker_s = s
            break
    if marker_s is None:
        raise ValueError(f"track has no marker for lane {track.lane!r}")
    x, y, heading = point_at(track, marker_s - behind, track.lane_offset)
    return VehiclePose(x, y, heading, 0.0)


def _marker_boxes(track: TrackSpec) -> np.ndarray:
    """World AABBs (xmin, xmax, ymin, ymax) of the red marker stripes."""
    L = track.straight_length
    R = track.corner_radius
    A = math.pi * R / 2.0
    c = L / 2.0 + R
    w = track.lane_width
    boxes = []
    for s, tag in track.marker_arc_positions:
        sd_lo, sd_hi = (0.0, w) if tag == "outer" else (-w, 0.0)
        seg = _segment_of(track, s)
        s0 = s % track.perimeter
        if seg == 0:  # bottom, +x travel
            x0 = -L / 2.0 + s0
            boxes.append((x0, x0 + MARKER_LENGTH, -c - sd_hi, -c - sd_lo))
        elif seg == 2:  # right, +y travel
            y0 = -L / 2.0 + (s0 - L - A)
            boxes.append((c + sd_lo, c + sd_hi, y0, y0 + MARKER_LENGTH))
        elif seg == 4:  # top, -x travel
            x1 = L / 2.0 - (s0 - 2 * L - 2 * A)
            boxes.append((x1 - MARKER_LENGTH, x1, c + sd_lo, c + sd_hi))
        elif seg == 6:  # left, -y travel
            y1 = L / 2.0 - (s0 - 3 * L - 3 * A)
            boxes.append((-c - sd_hi, -c - sd_lo, y1 - MARKER_LENGTH, y1))
        else:
            raise ValueError("marker not on a straight")
    if not boxes:
        return np.zeros((0, 4), np.float64)
    return np.array(boxes, np.float64)


# ------------------------------------------------------------------ rendering

@functools.lru_cache(maxsize=8)
def _camera_tables(camera: CameraModel):
    """Per-pixel ground-plane intersections in the vehicle frame.

    Returns (ahead, right, ground, horizon_row): distances in meters for
    pixels whose ray hits the ground within range, plus the first image
    row that sees ground.
    """
    W, H = camera.output_width, camera.output_height
    f = camera.focal_px
    px = np.broadcast_to((np.arange(W, dtype=np.float64) - (W - 1) / 2.0)[None, :], (H, W))
    py = np.broadcast_to((np.arange(H, dtype=np.float64) - (H - 1) / 2.0)[:, None], (H, W))
    cp = math.cos(camera.pitch_down)
    sp = math.sin(camera.pitch_down)
    d_fwd = cp - (py / f) * sp
    d_left = -px / f
    d_up = -sp - (py / f) * cp
    with np.errstate(divide="ignore", invalid="ignore"):
        t = camera.mount_height / -d_up
    ahead = t * d_fwd
    right = -t * d_left
    ground = (d_up < -1e-9) & (ahead > 0.0) & (ahead <= MAX_GROUND_RANGE)
    ahead = np.where(ground, ahead, 0.0)
    right = np.where(ground, right, 0.0)
    rows = np.nonzero(ground.any(axis=1))[0]
    horizon_row = int(rows[0]) if rows.size else H
    return ahead, right, ground, horizon_row


@functools.lru_cache(maxsize=8)
def _sky_vals(camera: CameraModel) -> np.ndarray:
    """Per-row sky intensity: linear ramp from zenith to horizon."""
    _, _, _, horizon = _camera_tables(camera)
    H = camera.output_height
    denom = max(horizon, 1)
    return SKY_TOP + (SKY_HORIZON - SKY_TOP) * (
        np.minimum(np.arange(H, dtype=np.float64), denom) / denom)


@functools.lru_cache(maxsize=1)
def _texture_tile() -> np.ndarray:
    rng = np.random.default_rng(TEXTURE_SEED)
    return rng.uniform(-1.0, 1.0, (512, 512)).astype(np.float32)


@functools.lru_cache(maxsize=16)
def _sky_prefill(camera: CameraModel, weather: WeatherCondition) -> np.ndarray:
    """Photometric-applied sky rows as uint8, for noise/glare-free frames.

    Must mirror the kernel arithmetic exactly.
    """
    v = (_sky_vals(camera) - 128.0) * weather.contrast + 128.0
    v = v * weather.brightness_gain
    iv = np.floor(v + 0.5)
    np.clip(iv, 0, 255, out=iv)
    return iv.astype(np.uint8)


@functools.lru_cache(maxsize=8)
def _noise_tile(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((1024, 1024), dtype=np.float32)


@functools.lru_cache(maxsize=32)
def _weather_arrays(weather: WeatherCondition):
    if weather.shadow_polygons:
        shadows = np.array(
            [[*(coord for pt in quad for coord in pt), atten]
             for quad, atten in weather.shadow_polygons], np.float64)
    else:
        shadows = np.zeros((0, 9), np.float64)
    if weather.glare_blobs:
        glare = np.array(weather.glare_blobs, np.float64)
    else:
        glare = np.zeros((0, 4), np.float64)
    return shadows, glare


def _splitmix(seed: int, k: int) -> int:
    h = (seed * 0x9E3779B97F4A7C15 + k * 0xBF58476D1CE4E5B9 + 0x1234567) & 0xFFFFFFFFFFFFFFFF
    h ^= h >> 30
    h = (h * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    h ^= h >> 27
    h = (h * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return h ^ (h >> 31)


def render_camera(track: TrackSpec, pose: VehiclePose, camera: CameraModel,
                  weather: WeatherCondition, frame_index: int = 0):
    """Render the forward camera: (RGB frame, oracle lane-line mask).

    The oracle mask marks pixels whose ray hits a painted lane line,
    before any photometric perturbation.
    """
    ahead, right, ground, _ = _camera_tables(camera)
    sky = _sky_rows(camera)
    tile = _noise_tile(weather.rng_seed)
    shadows, glare = _weather_arrays(weather)
    markers = _marker_boxes(track)

    fade = track.line_fade * weather.line_fade
    line_val = ASPHALT_VAL + (LINE_WHITE - ASPHALT_VAL) * fade
    noise_ox = _splitmix(weather.rng_seed, 2 * frame_index) & 1023
    noise_oy = _splitmix(weather.rng_seed, 2 * frame_index + 1) & 1023

    H, W = camera.output_height, camera.output_width
    frame = np.empty((H, W, 3), np.uint8)
    mask = np.empty((H, W), np.uint8)
    kernels.render_scene(
        frame, mask, ahead, right, ground, sky,
        float(pose.x), float(pose.y), math.cos(pose.heading), math.sin(pose.heading),
        track.straight_length / 2.0, track.corner_radius,
        track.lane_width, track.line_width / 2.0,
        ASPHALT_VAL, line_val, OFF_TRACK_VAL,
        np.array(MARKER_RGB, np.float64), markers,
        shadows, glare, float(weather.contrast), float(weather.brightness_gain),
        tile, float(weather.noise_sigma), noise_ox, noise_oy,
        TEXTURE_SEED, TEXTURE_AMP, TEXTURE_SCALE)
    return ImageBuffer(frame), ImageBuffer(mask)
