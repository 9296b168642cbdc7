"""Command line interface.

Every subcommand accepts :code:`--config` (a YAML file overlaid on the
defaults, see :func:`trackkit.config.load_config`) and :code:`--seed`. Flags
given on the command line override the config file.

Exit codes are 0 on success, 1 when the command fails and 2 on a usage error.
Diagnostics go to standard error at the level given by the environment
variable :code:`TRACKKIT_LOG` (one of error, warn, info, debug).

"""

from typing import Optional
import os
import sys
import json
import logging
import argparse

import numpy as np
import yaml

from . import __version__
from .models import Config
from .config import default_config, load_config
from .pipeline import build_dataset
from .metrics import evaluate_run, format_table, TASKS
from .harness import track, schedule_clips, uniform_sample, training_sample, MODES
from .tasks import export_tasks, stats, SAMPLINGS
from .tselector import check_selector, init_params, save_params
from .util import dumps_json, dump_json
from .errors import TrackkitError


_log_levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def setup_logging(logger_name: str = "trackkit") -> logging.Logger:
    logger = logging.getLogger(logger_name)
    level = os.environ.get("TRACKKIT_LOG", "warn").lower()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('[%(levelname)s] %(asctime)s %(message)s'))
    logger.handlers = [handler]
    logger.setLevel(_log_levels.get(level, logging.WARNING))
    if level not in _log_levels:
        logger.warning(f"Unknown TRACKKIT_LOG level {level}, using warn")
    return logger


def resolve_config(args: argparse.Namespace, overrides: dict[tuple[str, str], str]) -> Config:
    """Defaults, then the config file, then the flags in :code:`overrides`

    :code:`overrides` maps :code:`(section, key)` to the name of the flag.

    """
    config = default_config()
    if args.config:
        load_config(config, args.config)
    for (section, key), flag in overrides.items():
        value = getattr(args, flag, None)
        if value is not None and value is not False:
            config[section][key] = value
    if args.seed is not None:
        config.seed = args.seed
    return config


def _print_json(obj):
    sys.stdout.write(dumps_json(obj) + "\n")


def cmd_build_dataset(args) -> int:
    config = resolve_config(args, {("pipeline", "tau_g"): "tau_g",
                                   ("pipeline", "tau_t"): "tau_t",
                                   ("pipeline", "tau_iou"): "tau_iou",
                                   ("pipeline", "stoplist"): "stoplist",
                                   ("pipeline", "strict"): "strict",
                                   ("pipeline", "parallel"): "parallel",
                                   ("drift", "gate_threshold"): "gate"})
    if args.gate is not None:
        config.drift.gate_quantile = None
    result = build_dataset(args.chunks, args.tracks, args.out, args.reject_log, config)
    _print_json({"records": len(result.records), "rejections": len(result.rejections)})
    return 0


def cmd_evaluate(args) -> int:
    config = resolve_config(args, {})
    report = evaluate_run(args.gt, args.pred, args.task, config, strict=args.strict)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            dump_json(report, f)
            f.write("\n")
    if args.format == "json":
        _print_json(report)
    else:
        sys.stdout.write(format_table(report))
    return 0


def cmd_track(args) -> int:
    config = resolve_config(args, {("harness", "clip_len"): "clip_len",
                                   ("harness", "max_unsplit"): "max_unsplit",
                                   ("harness", "strict"): "strict",
                                   ("harness", "parallel"): "parallel"})
    trajectories = track(args.videos, args.endpoint, args.out, args.mode, config)
    _print_json({"videos": len(trajectories)})
    return 0


def cmd_check_tselector(args) -> int:
    config = resolve_config(args, {})
    seed = config.seed
    report = check_selector(args.n, args.c, args.d, args.k, seed, args.pure_selection,
                            config.tselector.hidden_ratio, config.tselector.proj_act,
                            config.tselector.check_samples)
    if args.save:
        save_params(init_params(args.c, args.d, args.k, seed=seed,
                                weighting="none" if args.pure_selection else "score",
                                proj_act=config.tselector.proj_act,
                                hidden_ratio=config.tselector.hidden_ratio), args.save)
    if not report["passed"]:
        logging.getLogger("trackkit").warning(
            f"Gradient check failed with relative error {report['max_relative_error']:.3g}")
    _print_json(report)
    return 0


def cmd_schedule(args) -> int:
    config = resolve_config(args, {("harness", "clip_len"): "clip_len",
                                   ("harness", "max_unsplit"): "max_unsplit"})
    schedule = schedule_clips(args.frames, config.harness.clip_len, config.harness.max_unsplit)
    _print_json({"frame_count": args.frames, "clips": [list(c) for c in schedule]})
    return 0


def cmd_sample_frames(args) -> int:
    config = resolve_config(args, {("harness", "uniform_frames"): "n"})
    h = config.harness
    if args.policy == "uniform":
        indices = uniform_sample(args.frames, h.uniform_frames)
    else:
        rng = np.random.default_rng(config.seed)
        indices = training_sample(args.frames, rng, h.min_train_frames, h.max_train_frames,
                                  h.max_interval)
    _print_json({"frame_count": args.frames, "policy": args.policy, "indices": indices})
    return 0


def cmd_export_tasks(args) -> int:
    config = resolve_config(args, {})
    samples = export_tasks(args.records, args.task, args.out, config, args.sampling)
    _print_json({"samples": len(samples)})
    return 0


def cmd_stats(args) -> int:
    _print_json(stats(args.records, args.fps))
    return 0


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="Seed for everything random")

    parser = argparse.ArgumentParser(
        prog="trackkit",
        description="Build tracking datasets from noun chunks, run and evaluate trackers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = subparsers.add_parser("build-dataset", parents=[common],
                              help="Filter chunks and trajectories into dataset records")
    p.add_argument("--chunks", required=True, help="Noun chunks with anchor groundings")
    p.add_argument("--tracks", required=True, help="Trajectories tracked from the groundings")
    p.add_argument("--out", required=True, help="Output records")
    p.add_argument("--reject-log", required=True, help="Output rejection log")
    p.add_argument("--tau-g", type=float, help="Grounding score threshold")
    p.add_argument("--tau-t", type=float, help="Tracking score threshold")
    p.add_argument("--tau-iou", type=float, help="Anchor IoU threshold")
    p.add_argument("--gate", type=float, help="Kalman gate on the squared Mahalanobis distance")
    p.add_argument("--stoplist", help="File of abstract noun lemmas, one per line")
    p.add_argument("--strict", action="store_true", help="Fail on malformed input lines")
    p.add_argument("--parallel", type=int, help="Videos processed concurrently")
    p.set_defaults(func=cmd_build_dataset)

    p = subparsers.add_parser("evaluate", parents=[common], help="Evaluate predictions")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--gt", required=True, help="Ground truth file")
    p.add_argument("--pred", required=True, help="Prediction file")
    p.add_argument("--strict", action="store_true", help="Fail on missing predictions")
    p.add_argument("--out", help="Write the JSON report here")
    p.add_argument("--format", choices=["table", "json"], default="table",
                   help="Format of the report on standard output")
    p.set_defaults(func=cmd_evaluate)

    p = subparsers.add_parser("track", parents=[common], help="Track videos with a model endpoint")
    p.add_argument("--videos", required=True, help="Videos with init boxes or expressions")
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--endpoint", required=True,
                   help="tcp://HOST:PORT, stdio:COMMAND or an http(s) URL")
    p.add_argument("--out", required=True, help="Output trajectories")
    p.add_argument("--clip-len", type=int)
    p.add_argument("--max-unsplit", type=int)
    p.add_argument("--strict", action="store_true",
                   help="Fail on an answer without a box instead of repeating the previous box")
    p.add_argument("--parallel", type=int, help="Videos tracked concurrently")
    p.set_defaults(func=cmd_track)

    p = subparsers.add_parser("check-tselector", parents=[common],
                              help="Check shapes and gradients of the token selector")
    p.add_argument("--n", type=int, default=16, help="Tokens per frame")
    p.add_argument("--c", type=int, default=8, help="Token width")
    p.add_argument("--d", type=int, default=6, help="Output width")
    p.add_argument("--k", type=int, default=4, help="Tokens kept")
    p.add_argument("--pure-selection", action="store_true",
                   help="Don't weight kept tokens by their scores")
    p.add_argument("--save", help="Write the parameters here")
    p.set_defaults(func=cmd_check_tselector)

    p = subparsers.add_parser("schedule", parents=[common], help="Print the clip schedule")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--clip-len", type=int)
    p.add_argument("--max-unsplit", type=int)
    p.set_defaults(func=cmd_schedule)

    p = subparsers.add_parser("sample-frames", parents=[common], help="Print sampled frames")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--policy", choices=["uniform", "train"], default="uniform")
    p.add_argument("--n", type=int, help="Frames for uniform sampling")
    p.set_defaults(func=cmd_sample_frames)

    p = subparsers.add_parser("export-tasks", parents=[common],
                              help="Export task samples from dataset records")
    p.add_argument("--records", required=True)
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--out", required=True)
    p.add_argument("--sampling", choices=SAMPLINGS, default="train")
    p.set_defaults(func=cmd_export_tasks)

    p = subparsers.add_parser("stats", parents=[common], help="Print dataset size")
    p.add_argument("--records", required=True)
    p.add_argument("--fps", type=float, default=30)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logger = setup_logging()
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return args.func(args)
    except (TrackkitError, OSError, yaml.YAMLError, json.decoder.JSONDecodeError) as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
