"""Steering law, command envelope, red-marker detection, lap counting."""

from dataclasses import dataclass, replace

import numpy as np

from .imaging import ImageBuffer

SPEED_CAP = 8.9  # ~20 mph in m/s
YAW_CAP = 1.5    # rad/s


@dataclass(frozen=True)
class TwistCommand:
    linear_x: float = 0.0
    angular_z: float = 0.0


@dataclass(frozen=True)
class LapState:
    laps_completed: int = 0
    armed: bool = False
    trigger_odometer: float = 0.0

    def distance_since_trigger(self, odometer: float) -> float:
        return odometer - self.trigger_odometer


def steer(center_x: float, mid_x: float, deadband: float = 10.0) -> float:
    """Steering ratio toward the projected lane center.

    Zero inside the deadband, else (mid - center) / mid; positive output
    means the lane center is left of the image mid, i.e. turn left.
    """
    if mid_x <= 0:
        raise ValueError("mid_x must be positive")
    if abs(center_x - mid_x) <= deadband:
        return 0.0
    return (mid_x - center_x) / mid_x


def red_mask(frame: ImageBuffer, r_min: int = 120, dominance: int = 50) -> ImageBuffer:
    """Marker detector: R >= r_min and R - max(G, B) >= dominance."""
    if frame.channels != 3:
        raise ValueError("red_mask expects a 3-channel image")
    d = frame.data.astype(np.int16)
    r = d[:, :, 0]
    gb = np.maximum(d[:, :, 1], d[:, :, 2])
    hit = (r >= r_min) & (r - gb >= dominance)
    return ImageBuffer(np.where(hit, 255, 0).astype(np.uint8))


def red_fraction(frame: ImageBuffer, r_min: int = 120, dominance: int = 50) -> float:
    """Red-marker pixel fraction over the lower-third ROI of the frame."""
    roi = ImageBuffer(frame.data[2 * frame.height // 3:])
    mask = red_mask(roi, r_min, dominance)
    return float(np.count_nonzero(mask.data)) / mask.data.size


def update_laps(state: LapState, frame: ImageBuffer, odometer: float,
                tau_on: float = 0.05, tau_off: float = 0.01,
                re_arm_distance: float = 10.0,
                r_min: int = 120, dominance: int = 50,
                frac: float | None = None) -> LapState:
    """Hysteresis lap counter on the red-marker fraction.

    Armed + fraction >= tau_on: count a lap and disarm.  Re-arm only once
    the fraction has dropped to tau_off and the vehicle has travelled
    re_arm_distance since the trigger.  Starts disarmed so the marker the
    vehicle lines up behind does not count as a lap.
    """
    if frac is None:
        frac = red_fraction(frame, r_min, dominance)
    if state.armed:
        if frac >= tau_on:
            return LapState(state.laps_completed + 1, False, odometer)
        return state
    if frac <= tau_off and state.distance_since_trigger(odometer) >= re_arm_distance:
        return replace(state, armed=True)
    return state


def command_envelope(raw: TwistCommand, prev: TwistCommand,
                     speed_cap: float = SPEED_CAP, yaw_cap: float = YAW_CAP,
                     rate_delta: float = 0.1) -> TwistCommand:
    """Clamp speed/yaw to caps and slew-limit yaw against the previous tick."""
    lx = min(max(raw.linear_x, -speed_cap), speed_cap)
    az = min(max(raw.angular_z, -yaw_cap), yaw_cap)
    step = min(max(az - prev.angular_z, -rate_delta), rate_delta)
    return TwistCommand(lx, prev.angular_z + step)
