"""Image buffer type and pixel-level primitives.

All operations are pure: they never mutate their input and return new
buffers.  Pixel data is 8-bit, row-major; grayscale buffers are (H, W)
arrays, color buffers (H, W, 3) RGB.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels

GRAY_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R 601
MAX_THRESHOLD_PROBES = 8


@dataclass
class ImageBuffer:
    """8-bit raster frame, 1 (gray) or 3 (RGB) channels."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            raise ValueError(f"pixel data must be uint8, got {arr.dtype}")
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise ValueError(f"expected (H, W) or (H, W, 3) shape, got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("width and height must be >= 1")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.data.copy())

    @classmethod
    def zeros(cls, width: int, height: int, channels: int = 1) -> "ImageBuffer":
        if channels == 1:
            return cls(np.zeros((height, width), np.uint8))
        if channels == 3:
            return cls(np.zeros((height, width, 3), np.uint8))
        raise ValueError("channels must be 1 or 3")


@dataclass
class ThresholdResult:
    threshold: int
    binary: ImageBuffer
    in_bounds: bool
    iterations: int


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """RGB -> gray via round(0.299 R + 0.587 G + 0.114 B).

    Integer arithmetic: (299 R + 587 G + 114 B + 500) // 1000 is exactly
    the half-up rounding of the weighted sum, with no float error.
    """
    if img.channels != 3:
        raise ValueError("to_grayscale expects a 3-channel image")
    d = img.data
    acc = d[:, :, 0].astype(np.uint32) * 299
    acc += d[:, :, 1].astype(np.uint32) * 587
    acc += d[:, :, 2].astype(np.uint32) * 114
    acc += 500
    acc //= 1000
    return ImageBuffer(acc.astype(np.uint8))


def median_blur(img: ImageBuffer, kernel: int) -> ImageBuffer:
    """Median filter with edge replication at the borders."""
    if img.channels != 1:
        raise ValueError("median_blur expects a 1-channel image")
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be odd and >= 1, got {kernel}")
    if kernel == 1:
        return img.copy()
    return ImageBuffer(kernels.median_blur_u8(img.data, kernel))


def apply_threshold(img: ImageBuffer, t: int) -> ImageBuffer:
    """Binary map: pixel > t -> 255, else 0 (strict inequality)."""
    if img.channels != 1:
        raise ValueError("apply_threshold expects a 1-channel image")
    return ImageBuffer((img.data > t).view(np.uint8) * np.uint8(255))


def white_fraction(binary: ImageBuffer) -> float:
    if binary.channels != 1:
        raise ValueError("white_fraction expects a 1-channel image")
    return float(np.count_nonzero(binary.data == 255)) / binary.data.size


def dynamic_threshold(gray: ImageBuffer, min_frac: float, max_frac: float) -> ThresholdResult:
    """Binary-search a threshold whose white fraction lands in bounds.

    At most 8 probes.  The white fraction is non-increasing in t, so if
    any threshold satisfies the bounds the search finds one; otherwise
    the last probed threshold is returned with in_bounds=False.
    """
    if gray.channels != 1:
        raise ValueError("dynamic_threshold expects a 1-channel image")
    if not (0.0 <= min_frac <= max_frac <= 1.0):
        raise ValueError(f"invalid fraction bounds [{min_frac}, {max_frac}]")
    hist = np.bincount(gray.data.ravel(), minlength=256)
    above = np.cumsum(hist[::-1])[::-1]  # above[t] = count of pixels >= t
    total = gray.data.size

    lo, hi = 0, 255
    t = 127
    iterations = 0
    in_bounds = False
    while lo <= hi and iterations < MAX_THRESHOLD_PROBES:
        t = (lo + hi) // 2
        iterations += 1
        frac = float(above[t + 1]) / total if t < 255 else 0.0
        if frac > max_frac:
            lo = t + 1
        elif frac < min_frac:
            hi = t - 1
        else:
            in_bounds = True
            break
    return ThresholdResult(t, apply_threshold(gray, t), in_bounds, iterations)


def adjust_brightness_contrast(img: ImageBuffer, gain: float, bias: float) -> ImageBuffer:
    """out = clamp(round(gain * in + bias), 0, 255), per channel."""
    v = np.floor(img.data.astype(np.float64) * gain + bias + 0.5)
    return ImageBuffer(np.clip(v, 0, 255).astype(np.uint8))


def flip_horizontal(img: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(np.ascontiguousarray(img.data[:, ::-1]))


def apply_lut(img: ImageBuffer, lut: np.ndarray) -> ImageBuffer:
    """Remap intensities of a 1-channel image through a 256-entry table."""
    if img.channels != 1:
        raise ValueError("apply_lut expects a 1-channel image")
    lut = np.asarray(lut, np.uint8)
    if lut.shape != (256,):
        raise ValueError("lut must have 256 entries")
    return ImageBuffer(lut[img.data])


def remap_colors(img: ImageBuffer, luts) -> ImageBuffer:
    """Remap each channel of an RGB image through its own 256-entry table."""
    if img.channels != 3:
        raise ValueError("remap_colors expects a 3-channel image")
    luts = [np.asarray(l, np.uint8) for l in luts]
    if len(luts) != 3 or any(l.shape != (256,) for l in luts):
        raise ValueError("expected three 256-entry lookup tables")
    out = np.empty_like(img.data)
    for ch in range(3):
        out[:, :, ch] = luts[ch][img.data[:, :, ch]]
    return ImageBuffer(out)


def gamma_lut(gamma: float) -> np.ndarray:
    i = np.arange(256, dtype=np.float64)
    return np.clip(np.floor(255.0 * (i / 255.0) ** gamma + 0.5), 0, 255).astype(np.uint8)
