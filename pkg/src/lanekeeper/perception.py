"""Lane perception: segmentation, probabilistic Hough segments, lane
center estimation, and diagnostic frame annotation."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .imaging import ImageBuffer, dynamic_threshold, median_blur, to_grayscale

# Annotation colors (RGB)
CYAN = (0, 255, 255)
YELLOW = (255, 255, 0)
RED = (255, 0, 0)
GREEN = (0, 255, 0)
BLUE = (0, 0, 255)
MAGENTA = (255, 0, 255)

MAGENTA_MIN_LENGTH = 180.0


@dataclass(frozen=True)
class LineSegment:
    x1: int
    y1: int
    x2: int
    y2: int

    @property
    def length(self) -> float:
        return math.hypot(self.x2 - self.x1, self.y2 - self.y1)

    @property
    def slope(self) -> float:
        """Rise over run in image coordinates (y grows downward)."""
        if self.x2 == self.x1:
            return math.inf
        return (self.y2 - self.y1) / (self.x2 - self.x1)

    @property
    def center_x(self) -> float:
        return (self.x1 + self.x2) / 2.0

    @property
    def center_y(self) -> float:
        return (self.y1 + self.y2) / 2.0


@dataclass(frozen=True)
class HoughParams:
    rho_resolution: float = 1.0
    theta_resolution: float = math.pi / 180.0
    vote_threshold: int = 30
    min_length: float = 70.0
    max_gap: int = 4
    slope_min: float = 0.25
    slope_max: float = 100.0
    rng_seed: int = 0
    max_segments: int = 4096

    def __post_init__(self):
        if self.rho_resolution <= 0 or self.theta_resolution <= 0:
            raise ValueError("resolutions must be positive")
        if self.min_length <= 0:
            raise ValueError("min_length must be positive")
        if self.max_gap < 0:
            raise ValueError("max_gap must be >= 0")
        if not self.slope_min < self.slope_max:
            raise ValueError("slope_min must be < slope_max")


@dataclass
class LaneEstimate:
    mid_x: float
    left_x: float | None = None
    right_x: float | None = None
    center_x: float | None = None
    segments_left: list = field(default_factory=list)
    segments_right: list = field(default_factory=list)


def segment_lane_pixels(frame: ImageBuffer, method: str = "classical",
                        oracle_mask: ImageBuffer | None = None,
                        min_frac: float = 0.01, max_frac: float = 0.10,
                        blur_kernel: int = 3) -> ImageBuffer:
    """Binary mask of lane-line pixels (0/255), same dimensions as the frame.

    classical: grayscale -> median blur -> dynamic threshold.
    oracle: the renderer's ground-truth line mask; only available when the
    caller has one (i.e. inside the simulator).
    """
    if method == "oracle":
        if oracle_mask is None:
            raise ValueError("oracle segmentation requested outside a simulation context")
        return oracle_mask.copy()
    if method != "classical":
        raise ValueError(f"unknown segmentation method {method!r}")
    gray = to_grayscale(frame) if frame.channels == 3 else frame
    blurred = median_blur(gray, blur_kernel)
    return dynamic_threshold(blurred, min_frac, max_frac).binary


def detect_segments(mask: ImageBuffer, params: HoughParams) -> list[LineSegment]:
    """Progressive probabilistic Hough transform with slope filtering.

    Candidate pixels are visited in a seeded random order; each popped
    pixel votes across all theta bins, and once a bin reaches the vote
    threshold the corresponding line is walked, bridging gaps up to
    max_gap, emitting runs at least min_length long, and un-voting the
    consumed pixels.
    """
    if mask.channels != 1:
        raise ValueError("detect_segments expects a 1-channel mask")
    H, W = mask.data.shape
    ys, xs = np.nonzero(mask.data)
    if xs.size == 0:
        return []
    rng = np.random.default_rng(params.rng_seed)
    order = rng.permutation(xs.size)
    xs = xs[order].astype(np.int64)
    ys = ys[order].astype(np.int64)

    n_theta = max(1, int(round(math.pi / params.theta_resolution)))
    thetas = np.arange(n_theta, dtype=np.float64) * params.theta_resolution
    cos_t = np.cos(thetas)
    sin_t = np.sin(thetas)
    diag = math.hypot(W, H)
    n_rho = 2 * int(math.ceil(diag / params.rho_resolution)) + 1

    state = np.where(mask.data != 0, 1, 0).astype(np.uint8)
    out = np.zeros((params.max_segments, 4), np.int32)
    n = kernels.ppht(state, xs, ys, cos_t, sin_t,
                     float(params.rho_resolution), n_rho,
                     int(params.vote_threshold),
                     float(params.min_length) ** 2,
                     int(params.max_gap), out)

    segments = []
    for i in range(n):
        seg = LineSegment(int(out[i, 0]), int(out[i, 1]), int(out[i, 2]), int(out[i, 3]))
        s = abs(seg.slope)
        if params.slope_min <= s <= params.slope_max:
            segments.append(seg)
    return segments


def split_left_right(segments, image_width: int):
    """Partition by segment center: center_x < width/2 goes left, else right."""
    half = image_width / 2.0
    left = [s for s in segments if s.center_x < half]
    right = [s for s in segments if s.center_x >= half]
    return left, right


def estimate_lane(segments, image_width: int, lane_width_px: float = 280.0) -> LaneEstimate:
    """Average left/right segment centers and project the lane midpoint.

    When only one side is seen, the center is offset by half the expected
    lane width toward the missing side; with no segments the estimate is
    empty and the caller decides what to do.
    """
    left, right = split_left_right(segments, image_width)
    est = LaneEstimate(mid_x=image_width / 2.0, segments_left=left, segments_right=right)
    if left:
        est.left_x = sum(s.center_x for s in left) / len(left)
    if right:
        est.right_x = sum(s.center_x for s in right) / len(right)
    if est.left_x is not None and est.right_x is not None:
        est.center_x = (est.left_x + est.right_x) / 2.0
    elif est.left_x is not None:
        est.center_x = est.left_x + lane_width_px / 2.0
    elif est.right_x is not None:
        est.center_x = est.right_x - lane_width_px / 2.0
    return est


def apply_roi(mask: ImageBuffer, top_frac: float) -> ImageBuffer:
    """Zero out rows above top_frac * height, keeping coordinates intact."""
    out = mask.data.copy()
    out[: int(round(top_frac * mask.height))] = 0
    return ImageBuffer(out)


def _draw_vline(data: np.ndarray, x: float, y0: int, y1: int, color, width: int = 2) -> None:
    xi = int(round(x))
    lo = max(0, xi - width // 2)
    hi = min(data.shape[1], xi + width // 2 + 1)
    if lo < hi:
        data[y0:y1, lo:hi] = color


def _draw_segment(data: np.ndarray, seg: LineSegment, color) -> None:
    # Bresenham
    x, y = seg.x1, seg.y1
    dx = abs(seg.x2 - seg.x1)
    dy = -abs(seg.y2 - seg.y1)
    sx = 1 if seg.x1 < seg.x2 else -1
    sy = 1 if seg.y1 < seg.y2 else -1
    err = dx + dy
    H, W = data.shape[:2]
    while True:
        if 0 <= y < H and 0 <= x < W:
            data[y, x] = color
        if x == seg.x2 and y == seg.y2:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def annotate(frame: ImageBuffer, estimate: LaneEstimate, segments) -> ImageBuffer:
    """Diagnostic overlay: cyan/yellow side markers, red image mid, green
    projected lane center, blue segments (magenta when longer than 180 px)."""
    if frame.channels == 3:
        data = frame.data.copy()
    else:
        data = np.repeat(frame.data[:, :, None], 3, axis=2)
    H = data.shape[0]
    band_top = int(0.5 * H)
    for seg in segments:
        color = MAGENTA if seg.length > MAGENTA_MIN_LENGTH else BLUE
        _draw_segment(data, seg, color)
    if estimate.left_x is not None:
        _draw_vline(data, estimate.left_x, band_top, H, CYAN)
    if estimate.right_x is not None:
        _draw_vline(data, estimate.right_x, band_top, H, YELLOW)
    _draw_vline(data, estimate.mid_x, band_top, H, RED)
    if estimate.center_x is not None:
        _draw_vline(data, estimate.center_x, band_top, H, GREEN)
    return ImageBuffer(data)
