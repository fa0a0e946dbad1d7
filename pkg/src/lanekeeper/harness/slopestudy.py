"""Mean-slope vs yaw-rate experiment: drive the track with the hybrid
controller, collect per-frame (segments, yaw) pairs, compute the four
slope-feature variants, and fit the baseline, linear, sigmoid, arctan,
and piecewise models on each.  The interesting outcome is the R^2
report, not a steering controller."""

import csv
from pathlib import Path

from .. import slopefit
from .config import Config, EpisodeConfig
from .episode import EpisodeRunner, HybridController


def collect_slope_log(ep: EpisodeConfig, cfg: Config):
    """(frame_id, segments, yaw) per camera frame from a hybrid drive."""
    controller = HybridController(cfg)
    runner = EpisodeRunner(ep, cfg, controller)
    log = []
    while runner.tick():
        if runner.new_frame:
            log.append((f"{runner.frame_index:06d}",
                        list(controller.segments),
                        runner.cmd.angular_z))
    return log, runner.metrics()


def run_slope_study(ep: EpisodeConfig, cfg: Config, out_dir: Path):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log, metrics = collect_slope_log(ep, cfg)

    with open(out_dir / "slope_samples.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "frame_id", "mean_slope", "yaw"])
        samples_by_mode = {}
        for mode in slopefit.FEATURE_MODES:
            samples = slopefit.mean_slope_features(log, mode, cfg.camera_width)
            samples_by_mode[mode] = samples
            for s in samples:
                writer.writerow([mode, s.frame_id, repr(s.mean_slope), repr(s.yaw)])

    with open(out_dir / "slope_fits.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "model", "params", "train_sse", "test_sse",
                         "train_r2", "test_r2", "converged"])
        for mode, samples in samples_by_mode.items():
            if len(samples) < 8:
                writer.writerow([mode, "skipped", f"only {len(samples)} samples",
                                 "", "", "", "", ""])
                continue
            base = slopefit.fit_baseline(samples)
            writer.writerow([mode, "baseline", repr(base.prediction),
                             repr(base.sse), "", repr(base.r2), "", "true"])
            lin = slopefit.fit_linear(samples, split_seed=ep.seed)
            writer.writerow([mode, "linear",
                             f"slope={lin.slope!r} intercept={lin.intercept!r}",
                             repr(lin.train_sse), repr(lin.test_sse),
                             repr(lin.train_r2), repr(lin.test_r2), "true"])
            for name, fit in (("sigmoid", slopefit.fit_sigmoid(samples)),
                              ("arctan", slopefit.fit_arctan(samples)),
                              ("piecewise", slopefit.fit_piecewise(samples))):
                writer.writerow([mode, name, repr(fit.params), repr(fit.sse),
                                 "", "", "", str(fit.converged).lower()])
    return metrics
