"""Command-line entry point: ``python -m panotrack <command>``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from . import __version__
from .config import RunConfig, load_config
from .const import (CAMERAS_FILE, DEFAULT_LOG_LEVEL, DETECTIONS_FILE,
                    LOG_ENV_VAR, LOG_FORMAT, REPORT_FILE,
                    SLAM_LANDMARKS_FILE, SLAM_NEES_FILE, SLAM_POSES_FILE,
                    SLAM_SUMMARY_FILE, SWEEP_FILE, SWEEP_SUMMARY_FILE,
                    SWEEP_TREND_FILE, TIMING_FILE, TRACKS_FILE, TRUTH_FILE)
from .coordinator import SweepCoordinator, TrackingCoordinator, summarize, time_trend
from .errors import PanotrackError
from .formats import (read_cameras, read_detections, read_records,
                      write_cameras, write_detections, write_json,
                      write_records, write_table)
from .mot_metrics import evaluate
from .scenario_sim import simulate
from .slam_demo import run_demo

_LOGGER = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace, RunConfig], None]


def setup_logging() -> None:
    """Configure the root logger from ``PANOTRACK_LOG`` after loading ``.env``."""
    load_dotenv()
    name = os.environ.get(LOG_ENV_VAR, DEFAULT_LOG_LEVEL).upper()
    level = logging.getLevelName(name)
    known = isinstance(level, int)
    if not known:
        level = logging.getLevelName(DEFAULT_LOG_LEVEL)
    logging.basicConfig(stream=sys.stderr, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)
    if not known:
        _LOGGER.warning("Unknown log level %r in %s, using %s", name, LOG_ENV_VAR, DEFAULT_LOG_LEVEL)


def _output_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> None:
    scenario = simulate(config.scenario)
    out = _output_dir(config)
    write_detections(out / DETECTIONS_FILE, scenario.detections)
    write_cameras(out / CAMERAS_FILE, scenario.world.cameras)
    write_records(out / TRUTH_FILE, scenario.world.truth)


def cmd_track(args: argparse.Namespace, config: RunConfig) -> None:
    detections = read_detections(args.detections)
    cameras = read_cameras(args.cameras)
    result = TrackingCoordinator(cameras, config.tracker, seed=config.seed).run(detections)
    out = _output_dir(config)
    write_records(out / TRACKS_FILE, result.records)
    write_json(out / TIMING_FILE, result.timing())


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> None:
    truth = read_records(args.truth)
    tracks = read_records(args.tracks)
    report = evaluate(truth, tracks, config.threshold).to_dict()
    write_json(_output_dir(config) / REPORT_FILE, report)
    print(json.dumps(report, indent=2))


def cmd_sweep(args: argparse.Namespace, config: RunConfig) -> None:
    table = SweepCoordinator(config).run()
    summary = summarize(table)
    trend = time_trend(summary)
    out = _output_dir(config)
    write_table(out / SWEEP_FILE, table)
    write_table(out / SWEEP_SUMMARY_FILE, summary)
    if not trend.empty:
        write_table(out / SWEEP_TREND_FILE, trend)
    print(summary.to_string(index=False))
    if not trend.empty:
        print()
        print(trend.to_string(index=False))


def cmd_slam_demo(args: argparse.Namespace, config: RunConfig) -> None:
    result = run_demo(config.slam, seed=config.seed)
    out = _output_dir(config)
    write_table(out / SLAM_POSES_FILE, result.first_run.poses)
    write_table(out / SLAM_LANDMARKS_FILE, result.first_run.landmarks)
    # Noiseless runs leave whole steps undefined.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        per_step = np.nanmean(result.nees_by_step, axis=0)
    nees = pd.DataFrame({"step": np.arange(1, len(per_step) + 1), "mean_nees": per_step})
    write_table(out / SLAM_NEES_FILE, nees)
    summary = result.summary()
    write_json(out / SLAM_SUMMARY_FILE, summary)
    print(json.dumps(summary, indent=2))


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    common.add_argument("--jobs", type=int, help="parallel sweep processes")
    common.add_argument("--threshold", type=float, help="match threshold in meters")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panotrack",
        description="Multi-view 3D target tracking, evaluation and EKF-SLAM tools.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common_options()

    simulate_parser = commands.add_parser(
        "simulate", parents=[common], help="generate detections, cameras and ground truth"
    )
    simulate_parser.set_defaults(handler=cmd_simulate)

    track_parser = commands.add_parser(
        "track", parents=[common], help="track a detection file and time the tracker"
    )
    track_parser.add_argument("detections", type=Path, help="detection CSV")
    track_parser.add_argument("cameras", type=Path, help="camera JSON")
    track_parser.set_defaults(handler=cmd_track)

    evaluate_parser = commands.add_parser(
        "evaluate", parents=[common], help="CLEAR-MOT scores of tracks against ground truth"
    )
    evaluate_parser.add_argument("truth", type=Path, help="ground-truth CSV")
    evaluate_parser.add_argument("tracks", type=Path, help="track CSV")
    evaluate_parser.set_defaults(handler=cmd_evaluate)

    sweep_parser = commands.add_parser(
        "sweep", parents=[common], help="run the k_h by i_bls_max grid"
    )
    sweep_parser.set_defaults(handler=cmd_sweep)

    slam_parser = commands.add_parser(
        "slam-demo", parents=[common], help="Monte-Carlo EKF-SLAM loop demo"
    )
    slam_parser.set_defaults(handler=cmd_slam_demo)
    return parser


def _report_error(ex: BaseException) -> None:
    if isinstance(ex, OSError) and ex.strerror:
        message = f"{ex.filename}: {ex.strerror}" if ex.filename else ex.strerror
    else:
        message = str(ex)
    message = " ".join(message.split())
    print(f"panotrack: error={type(ex).__name__} message={message}", file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run one command and return the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging()
    handler: Handler = args.handler
    try:
        config = load_config(args.config).with_overrides(
            seed=args.seed, output_dir=args.out, threshold=args.threshold, jobs=args.jobs
        )
        _LOGGER.info("Running %s", args.command)
        handler(args, config)
    except (PanotrackError, OSError) as ex:
        _LOGGER.debug("Command %s failed", args.command, exc_info=True)
        _report_error(ex)
        return 1
    _LOGGER.info("Finished %s", args.command)
    return 0
