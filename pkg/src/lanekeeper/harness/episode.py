"""Closed-loop episode runner: render -> controller -> envelope -> step
-> lap counting -> metrics, for the hybrid, learned, and teleop
controllers."""

import json
import time
from dataclasses import dataclass, field

from .. import e2e
from ..control import (LapState, TwistCommand, command_envelope, red_fraction,
                       steer)
from ..imaging import ImageBuffer
from ..perception import HoughParams, apply_roi, detect_segments, estimate_lane, segment_lane_pixels
from ..simworld import (CameraModel, TrackSpec, cross_track_error,
                        render_camera, start_pose, step, weather_preset)
from .config import Config, EpisodeConfig


class LostLaneError(RuntimeError):
    pass


def _mix(seed: int, salt: int) -> int:
    h = (seed * 0x9E3779B97F4A7C15 + salt * 0xD1B54A32D192ED03 + 0x2545F491) & 0xFFFFFFFFFFFFFFFF
    h ^= h >> 31
    return h & 0x7FFFFFFF


def build_track(cfg: Config, lane: str) -> TrackSpec:
    return TrackSpec(straight_length=cfg.straight_length,
                     corner_radius=cfg.corner_radius,
                     lane_width=cfg.lane_width,
                     line_width=cfg.line_width,
                     lane=lane,
                     line_fade=cfg.line_fade)


def build_camera(cfg: Config) -> CameraModel:
    return CameraModel(output_width=cfg.camera_width,
                       output_height=cfg.camera_height,
                       horizontal_fov=cfg.camera_hfov,
                       mount_height=cfg.camera_height_m,
                       pitch_down=cfg.camera_pitch,
                       fps=cfg.camera_fps)


def _hough_params(cfg: Config, seed: int) -> HoughParams:
    return HoughParams(rho_resolution=cfg.hough_rho,
                       theta_resolution=cfg.hough_theta,
                       vote_threshold=cfg.hough_votes,
                       min_length=cfg.hough_min_length,
                       max_gap=cfg.hough_max_gap,
                       slope_min=cfg.slope_min,
                       slope_max=cfg.slope_max,
                       rng_seed=seed)


def _lane_estimate(cfg: Config, mask: ImageBuffer, seed: int):
    roi = apply_roi(mask, cfg.roi_top_frac)
    segments = detect_segments(roi, _hough_params(cfg, seed))
    return estimate_lane(segments, mask.width, cfg.lane_width_px), segments


class HybridController:
    """Segmentation -> Hough -> lane estimate -> proportional steering."""

    provides_steering_error = True

    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.raw = TwistCommand(cfg.speed, 0.0)
        self.missing_ticks = 0
        self.have_estimate = True
        self.steering_error_px = None
        self.estimate = None
        self.segments = []

    def on_frame(self, frame, oracle_mask, frame_seed):
        cfg = self.cfg
        mask = segment_lane_pixels(frame, cfg.segmentation, oracle_mask,
                                   cfg.thresh_min_frac, cfg.thresh_max_frac,
                                   cfg.blur_kernel)
        est, segs = _lane_estimate(cfg, mask, frame_seed)
        self.estimate, self.segments = est, segs
        self.have_estimate = est.center_x is not None
        if not self.have_estimate:
            self.steering_error_px = None
            return
        self.missing_ticks = 0
        self.steering_error_px = abs(est.center_x - est.mid_x)
        ratio = steer(est.center_x, est.mid_x, cfg.deadband_px)
        yaw = min(max(ratio * cfg.yaw_gain, -cfg.yaw_cap), cfg.yaw_cap)
        self.raw = TwistCommand(cfg.speed, yaw)

    def on_tick(self):
        if not self.have_estimate:
            self.missing_ticks += 1
            if self.missing_ticks > self.cfg.lost_lane_ticks:
                raise LostLaneError(
                    f"no lane estimate for {self.missing_ticks} ticks")
        return self.raw


class E2EController:
    """Ensemble inference over the learned steering regressor."""

    provides_steering_error = False

    def __init__(self, cfg: Config, model: e2e.LinearSteeringModel):
        self.cfg = cfg
        self.model = model
        self.params = e2e.EnsembleParams(
            variant_transforms=((1.0, cfg.ensemble_brightness_bias),
                                (cfg.ensemble_contrast_gain, 0.0)),
            outlier_delta=cfg.outlier_delta,
            rate_delta=cfg.ensemble_rate_delta)
        self.prev = 0.0
        self.raw = TwistCommand(cfg.speed, 0.0)

    def on_frame(self, frame, oracle_mask, frame_seed):
        yaw = e2e.ensemble_predict(self.model, frame, self.prev, self.params)
        self.prev = yaw
        self.raw = TwistCommand(self.cfg.speed, yaw)

    def on_tick(self):
        return self.raw


class TeleopController:
    """Applies the most recent remote command; stale input zeroes the yaw."""

    provides_steering_error = False

    def __init__(self, cfg: Config, mailbox, clock=time.monotonic):
        self.cfg = cfg
        self.mailbox = mailbox
        self.clock = clock

    def on_frame(self, frame, oracle_mask, frame_seed):
        pass

    def on_tick(self):
        steer_in, speed_in, stamp = self.mailbox.get()
        yaw = -steer_in * self.cfg.yaw_cap
        if stamp is None or (self.clock() - stamp) * 1000.0 > self.cfg.teleop_stale_ms:
            yaw = 0.0
        return TwistCommand(speed_in * self.cfg.teleop_max_speed, yaw)


@dataclass
class LapMetrics:
    laps_completed: int
    avg_speed: float
    avg_steering_error_px: float
    avg_cross_track_error_m: float
    per_lap_speed: list
    per_lap_steering_error_px: list
    per_lap_cross_track_error_m: list
    per_lap_ticks: list
    total_ticks: int
    episode_result: str
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0  # measured, but excluded from the JSON document

    def to_json_dict(self) -> dict:
        return {
            "laps_completed": self.laps_completed,
            "avg_speed": self.avg_speed,
            "avg_steering_error_px": self.avg_steering_error_px,
            "avg_cross_track_error_m": self.avg_cross_track_error_m,
            "per_lap_speed": self.per_lap_speed,
            "per_lap_steering_error_px": self.per_lap_steering_error_px,
            "per_lap_cross_track_error_m": self.per_lap_cross_track_error_m,
            "per_lap_ticks": self.per_lap_ticks,
            "total_ticks": self.total_ticks,
            "episode_result": self.episode_result,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "LapMetrics":
        return cls(**json.loads(text))


class _Accumulator:
    def __init__(self):
        self.speed_sum = 0.0
        self.err_sum = 0.0
        self.err_count = 0
        self.cte_sum = 0.0
        self.ticks = 0

    def add(self, speed, err_px, cte):
        self.speed_sum += abs(speed)
        if err_px is not None:
            self.err_sum += err_px
            self.err_count += 1
        self.cte_sum += abs(cte)
        self.ticks += 1

    def merge(self, other):
        self.speed_sum += other.speed_sum
        self.err_sum += other.err_sum
        self.err_count += other.err_count
        self.cte_sum += other.cte_sum
        self.ticks += other.ticks

    def mean_speed(self):
        return self.speed_sum / self.ticks if self.ticks else 0.0

    def mean_err(self):
        return self.err_sum / self.err_count if self.err_count else 0.0

    def mean_cte(self):
        return self.cte_sum / self.ticks if self.ticks else 0.0


class EpisodeRunner:
    """Drives one episode tick by tick; owns the world state."""

    def __init__(self, ep: EpisodeConfig, cfg: Config, controller=None,
                 record_enabled=None):
        self.ep = ep
        self.cfg = cfg
        self.track = build_track(cfg, ep.lane)
        self.camera = build_camera(cfg)
        self.weather = weather_preset(ep.weather, rng_seed=_mix(ep.seed, 101))
        self.pose = start_pose(self.track)
        if controller is None:
            controller = self._default_controller()
        self.controller = controller
        self.lap_state = LapState()
        self.prev_cmd = TwistCommand(0.0, 0.0)
        self.cmd = TwistCommand(0.0, 0.0)
        self.frame = None
        self.oracle_mask = None
        self.red_frac = 0.0
        self.frame_index = -1
        self._frame_due = 0.0
        self.tick_index = 0
        self.result = None  # None while running
        self.new_frame = False
        # metrics
        self._overall = _Accumulator()
        self._lap_acc = _Accumulator()
        self.per_lap = []
        self._observer_err = None
        # recording
        self.dataset = e2e.Dataset() if ep.record_path else None
        self.record_enabled = record_enabled if record_enabled is not None else (lambda: True)
        self._t0 = time.perf_counter()

    def _default_controller(self):
        if self.ep.controller == "hybrid":
            return HybridController(self.cfg)
        if self.ep.controller == "e2e":
            if not self.ep.model_path:
                raise ValueError("e2e controller requires a model file")
            model = e2e.LinearSteeringModel.load(self.ep.model_path)
            return E2EController(self.cfg, model)
        raise ValueError("teleop episodes must be driven through `lanekeeper serve`")

    def tick(self) -> bool:
        """Advance one tick; returns False once the episode has ended."""
        if self.result is not None:
            return False
        ep, cfg = self.ep, self.cfg
        t = self.tick_index * ep.tick
        self.new_frame = False
        if t >= self._frame_due - 1e-9:
            self.frame_index += 1
            self._frame_due += 1.0 / cfg.camera_fps
            self.frame, self.oracle_mask = render_camera(
                self.track, self.pose, self.camera, self.weather, self.frame_index)
            self.new_frame = True
            self.red_frac = red_fraction(self.frame, cfg.red_r_min, cfg.red_dominance)
            frame_seed = _mix(ep.seed, 10_000 + self.frame_index)
            try:
                self.controller.on_frame(self.frame, self.oracle_mask, frame_seed)
            except LostLaneError:
                self._finish("error:lost_lane")
                return False
            if not self.controller.provides_steering_error:
                est, _ = _lane_estimate(cfg, self.oracle_mask, frame_seed)
                self._observer_err = (abs(est.center_x - est.mid_x)
                                      if est.center_x is not None else None)
        try:
            raw = self.controller.on_tick()
        except LostLaneError:
            self._finish("error:lost_lane")
            return False
        if self.tick_index % cfg.publish_divider == 0:
            self.cmd = command_envelope(raw, self.prev_cmd, cfg.speed_cap,
                                        cfg.yaw_cap, cfg.rate_delta)
            self.prev_cmd = self.cmd
        if self.new_frame and self.dataset is not None and self.record_enabled():
            if self.frame_index % cfg.record_stride == 0:
                e2e.log_record(self.frame, self.cmd, self.dataset,
                               timestamp=t, yaw_cap=cfg.yaw_cap)

        self.pose = step(self.pose, self.cmd, ep.tick)
        prev_laps = self.lap_state.laps_completed
        self.lap_state = update_l = _update_laps(self.lap_state, self.red_frac,
                                                 self.pose.odometer, cfg)
        cte = cross_track_error(self.track, self.pose)
        err_px = (self.controller.steering_error_px
                  if self.controller.provides_steering_error else self._observer_err)
        self._lap_acc.add(self.cmd.linear_x, err_px, cte)
        self.tick_index += 1

        if update_l.laps_completed > prev_laps:
            self.per_lap.append(self._lap_acc)
            self._lap_acc = _Accumulator()
            if update_l.laps_completed >= ep.lap_target:
                self._finish("completed")
                return False
        if abs(cte) > self.track.lane_width:
            self._finish("error:off_track")
            return False
        if self.tick_index >= ep.max_ticks:
            self._finish("completed")
            return False
        return True

    def _finish(self, result: str):
        self.result = result

    def metrics(self) -> LapMetrics:
        overall = _Accumulator()
        for lap in self.per_lap:
            overall.merge(lap)
        overall.merge(self._lap_acc)
        cfg_echo = {
            "controller": self.ep.controller,
            "lane": self.ep.lane,
            "weather": self.ep.weather,
            "seed": self.ep.seed,
            "lap_target": self.ep.lap_target,
        }
        return LapMetrics(
            laps_completed=len(self.per_lap),
            avg_speed=overall.mean_speed(),
            avg_steering_error_px=overall.mean_err(),
            avg_cross_track_error_m=overall.mean_cte(),
            per_lap_speed=[l.mean_speed() for l in self.per_lap],
            per_lap_steering_error_px=[l.mean_err() for l in self.per_lap],
            per_lap_cross_track_error_m=[l.mean_cte() for l in self.per_lap],
            per_lap_ticks=[l.ticks for l in self.per_lap],
            total_ticks=self.tick_index,
            episode_result=self.result or "completed",
            config=cfg_echo,
            wall_time=time.perf_counter() - self._t0,
        )


def _update_laps(state: LapState, frac: float, odometer: float, cfg: Config) -> LapState:
    from ..control import update_laps
    return update_laps(state, None, odometer, cfg.red_tau_on, cfg.red_tau_off,
                       cfg.re_arm_distance, cfg.red_r_min, cfg.red_dominance,
                       frac=frac)


def run_episode(ep: EpisodeConfig, cfg: Config | None = None,
                controller=None) -> LapMetrics:
    cfg = cfg or Config()
    runner = EpisodeRunner(ep, cfg, controller)
    while runner.tick():
        pass
    if runner.dataset is not None and runner.ep.record_path:
        runner.dataset.save(runner.ep.record_path)
    return runner.metrics()
