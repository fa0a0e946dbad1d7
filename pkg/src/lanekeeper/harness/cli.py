"""`lanekeeper` command line interface."""

import argparse
import sys
from pathlib import Path

from .. import e2e
from .._backend import active_backend
from ..imaging import ImageBuffer
from ..netpbm import read_netpbm, write_netpbm
from ..perception import annotate
from .compare import compare
from .config import Config, EpisodeConfig
from .episode import HybridController, _lane_estimate, run_episode

WEATHER_CHOICES = ("clear", "overcast", "rain", "glare", "dusk")


def _add_episode_flags(p: argparse.ArgumentParser):
    p.add_argument("--controller", choices=("hybrid", "e2e"), default="hybrid")
    p.add_argument("--lane", choices=("inner", "outer"), default="outer")
    p.add_argument("--laps", type=int, default=None, help="lap target (default from config)")
    p.add_argument("--weather", choices=WEATHER_CHOICES, default="clear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", default=None, help="model file (e2e controller)")
    p.add_argument("--max-ticks", type=int, default=None)


def _load_config(args) -> Config:
    cfg = Config.from_file(args.config) if args.config else Config()
    return cfg


def _episode_config(args, cfg: Config, controller=None) -> EpisodeConfig:
    return EpisodeConfig(
        controller=controller or args.controller,
        lane=args.lane,
        weather=args.weather,
        seed=args.seed,
        lap_target=args.laps if args.laps is not None else cfg.lap_target,
        max_ticks=args.max_ticks if args.max_ticks is not None else cfg.max_ticks,
        tick=cfg.tick,
        model_path=args.model,
        record_path=getattr(args, "record", None),
    )


def _emit_metrics(metrics, out):
    text = metrics.to_json()
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)
    print(f"wall time: {metrics.wall_time:.2f} s (backend: {active_backend()})",
          file=sys.stderr)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    metrics = run_episode(_episode_config(args, cfg), cfg)
    _emit_metrics(metrics, args.out)
    return 0 if not metrics.episode_result.startswith("error") else 1


def cmd_record(args) -> int:
    cfg = _load_config(args)
    ep = _episode_config(args, cfg)
    ep.record_path = args.out
    metrics = run_episode(ep, cfg)
    print(f"recorded dataset written to {args.out}", file=sys.stderr)
    _emit_metrics(metrics, args.metrics_out)
    return 0 if not metrics.episode_result.startswith("error") else 1


def cmd_augment_data(args) -> int:
    ds = e2e.Dataset.load(args.dataset)
    out = e2e.augment_dataset(ds)
    out.save(args.out)
    print(f"{len(ds)} records -> {len(out)} records")
    return 0


def cmd_train_model(args) -> int:
    cfg = _load_config(args)
    ds = e2e.Dataset.load(args.dataset)
    result = e2e.train(ds, epochs=cfg.train_epochs,
                       learning_rate=cfg.train_lr, seed=args.seed)
    result.model.save(args.out)
    print(f"trained on {len(ds)} records over {cfg.train_epochs} epochs; "
          f"loss {result.losses[0]:.6f} -> {result.losses[-1]:.6f}")
    return 0


def cmd_compare(args) -> int:
    report = compare(args.metrics)
    if args.out:
        Path(args.out).write_text(report)
    sys.stdout.write(report)
    return 0


def cmd_eval_frame(args) -> int:
    cfg = _load_config(args)
    frame = read_netpbm(args.image)
    if args.controller == "e2e":
        if not args.model:
            print("eval-frame with the e2e controller requires --model", file=sys.stderr)
            return 2
        model = e2e.LinearSteeringModel.load(args.model)
        print(f"steering: {e2e.predict(model, frame)!r}")
        return 0
    controller = HybridController(cfg)
    rgb = frame if frame.channels == 3 else _gray_to_rgb(frame)
    controller.on_frame(rgb, None, args.seed)
    est = controller.estimate
    if est is None or est.center_x is None:
        print("no lane estimate")
    else:
        from ..control import steer
        ratio = steer(est.center_x, est.mid_x, cfg.deadband_px)
        print(f"center_x: {est.center_x!r}  mid_x: {est.mid_x!r}  steer: {ratio!r}")
    if args.out and est is not None:
        annotated = annotate(rgb, est, controller.segments)
        write_netpbm(annotated, args.out)
    return 0


def _gray_to_rgb(img: ImageBuffer) -> ImageBuffer:
    import numpy as np
    return ImageBuffer(np.repeat(img.data[:, :, None], 3, axis=2))


def cmd_serve(args) -> int:
    from .teleop import serve as teleop_serve
    cfg = _load_config(args)
    ep = EpisodeConfig(
        controller="teleop", lane=args.lane, weather=args.weather,
        seed=args.seed,
        lap_target=args.laps if args.laps is not None else cfg.lap_target,
        max_ticks=args.max_ticks if args.max_ticks is not None else cfg.max_ticks,
        tick=cfg.tick, record_path=args.record)
    try:
        metrics = teleop_serve(ep, cfg, args.port)
    except OSError as exc:
        print(f"cannot listen on port {args.port}: {exc}", file=sys.stderr)
        return 2
    _emit_metrics(metrics, args.out)
    return 0


def cmd_slope_study(args) -> int:
    from .slopestudy import run_slope_study
    cfg = _load_config(args)
    ep = EpisodeConfig(controller="hybrid", lane=args.lane, weather=args.weather,
                       seed=args.seed,
                       lap_target=args.laps if args.laps is not None else 2,
                       max_ticks=args.max_ticks if args.max_ticks is not None else cfg.max_ticks,
                       tick=cfg.tick)
    run_slope_study(ep, cfg, Path(args.out))
    print(f"slope study written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lanekeeper",
        description="Closed-loop lane-keeping workbench")
    parser.add_argument("--config", default=None, help="flat key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one closed-loop episode")
    _add_episode_flags(p)
    p.add_argument("--out", default=None, help="metrics JSON path")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("record", help="run an episode while logging a dataset")
    _add_episode_flags(p)
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--metrics-out", default=None)
    p.set_defaults(fn=cmd_record)

    p = sub.add_parser("augment-data", help="expand a dataset 10x")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_augment_data)

    p = sub.add_parser("train-model", help="train the steering regressor")
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="model file path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train_model)

    p = sub.add_parser("compare", help="tabulate metrics files side by side")
    p.add_argument("metrics", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("eval-frame", help="run a controller on one image")
    p.add_argument("image")
    p.add_argument("--controller", choices=("hybrid", "e2e"), default="hybrid")
    p.add_argument("--model", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="annotated PPM path")
    p.set_defaults(fn=cmd_eval_frame)

    p = sub.add_parser("serve", help="teleoperation/telemetry session")
    p.add_argument("--port", type=int, default=8700)
    p.add_argument("--lane", choices=("inner", "outer"), default="outer")
    p.add_argument("--laps", type=int, default=None)
    p.add_argument("--weather", choices=WEATHER_CHOICES, default="clear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-ticks", type=int, default=None)
    p.add_argument("--record", default=None, help="dataset directory for recording")
    p.add_argument("--out", default=None, help="metrics JSON path")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("slope-study", help="mean-slope vs yaw-rate experiment")
    p.add_argument("--lane", choices=("inner", "outer"), default="outer")
    p.add_argument("--laps", type=int, default=None, help="default 2")
    p.add_argument("--weather", choices=WEATHER_CHOICES, default="clear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-ticks", type=int, default=None)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(fn=cmd_slope_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
