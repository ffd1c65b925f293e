"""Tracking loop timing and the parameter sweep.

``TrackingCoordinator`` feeds a detection sequence frame by frame through
a ``MultiViewTracker`` and measures wall-clock time around the tracker
only. ``SweepCoordinator`` runs the (k_h, i_bls_max, seed) grid, each
cell in its own process when more than one job is allowed.
"""

from __future__ import annotations

import asyncio
import itertools
import logging
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import pandas as pd
from scipy import stats

from .camera import CameraModel
from .config import RunConfig
from .errors import PanotrackError
from .formats import records_frame
from .mot_metrics import evaluate
from .multiview_tracker import MultiViewTracker, TrackRecord
from .scenario_sim import simulate
from .tracks import Detection, TrackerParams

_LOGGER = logging.getLogger(__name__)

SWEEP_COLUMNS = ["k_h", "i_bls_max", "seed", "mota", "motp", "seconds"]


@dataclass
class TrackingResult:
    """Output records and timing of one tracking run."""

    records: list[TrackRecord]
    frame_seconds: dict[int, float] = field(default_factory=dict)
    best_score: float = 0.0
    n_tracks: int = 0

    @property
    def total_seconds(self) -> float:
        return float(sum(self.frame_seconds.values()))

    def timing(self) -> dict[str, Any]:
        return {
            "frames": len(self.frame_seconds),
            "total_seconds": self.total_seconds,
            "per_frame_seconds": [
                {"frame": frame, "seconds": seconds}
                for frame, seconds in sorted(self.frame_seconds.items())
            ],
            "best_score": self.best_score,
            "tracks": self.n_tracks,
        }


class TrackingCoordinator:
    """Drives a tracker over a detection sequence."""

    def __init__(
        self,
        cameras: Iterable[CameraModel],
        params: TrackerParams,
        seed: int = 0,
    ) -> None:
        self.tracker = MultiViewTracker(cameras, params, seed=seed)
        self.last_latency: float | None = None
        _LOGGER.debug("TrackingCoordinator initialized with k_h=%d, i_bls_max=%d",
                      params.k_h, params.i_bls_max)

    def run(self, detections: Sequence[Detection]) -> TrackingResult:
        """Step through every frame from the first to the last detection.

        Frames without detections inside that range are still stepped so
        missed tracks age correctly.
        """
        by_frame: dict[int, list[Detection]] = {}
        for det in detections:
            by_frame.setdefault(det.frame, []).append(det)
        result = TrackingResult(records=[])
        if not by_frame:
            _LOGGER.info("No detections to track")
            return result

        for frame in range(min(by_frame), max(by_frame) + 1):
            start = time.perf_counter()
            records = self.tracker.step(frame, by_frame.get(frame, []))
            elapsed = time.perf_counter() - start
            self.last_latency = round(elapsed * 1000, 1)
            result.frame_seconds[frame] = elapsed
            result.records.extend(records)
            _LOGGER.debug("Frame %d tracked in %.1f ms", frame, self.last_latency)

        result.best_score = float(self.tracker.best.score)
        result.n_tracks = len({record.id for record in result.records})
        _LOGGER.info(
            "Tracked %d frames in %.3f s: %d tracks, best score %.6f",
            len(result.frame_seconds), result.total_seconds, result.n_tracks, result.best_score,
        )
        return result


@dataclass(frozen=True)
class SweepCell:
    k_h: int
    i_bls_max: int
    seed: int


def run_cell(cell: SweepCell, config: RunConfig) -> dict[str, Any]:
    """Simulate, track and evaluate one grid cell.

    Module-level so worker processes can unpickle it.
    """
    scenario_config = replace(config.scenario, seed=cell.seed, n_frames=config.sweep.n_frames)
    scenario = simulate(scenario_config)
    params = replace(config.tracker, k_h=cell.k_h, i_bls_max=cell.i_bls_max)
    result = TrackingCoordinator(scenario.world.cameras, params, seed=cell.seed).run(
        scenario.detections
    )
    report = evaluate(scenario.world.truth, records_frame(result.records), config.threshold)
    _LOGGER.info(
        "Sweep cell k_h=%d i_bls_max=%d seed=%d: MOTA %.4f in %.3f s",
        cell.k_h, cell.i_bls_max, cell.seed, report.mota, result.total_seconds,
    )
    return {
        "k_h": cell.k_h,
        "i_bls_max": cell.i_bls_max,
        "seed": cell.seed,
        "mota": report.mota,
        "motp": report.motp,
        "seconds": result.total_seconds,
    }


class SweepCoordinator:
    """Runs the hypothesis-budget grid and summarizes it."""

    def __init__(self, config: RunConfig, jobs: int | None = None) -> None:
        self.config = config
        self.jobs = jobs if jobs is not None else config.jobs

    def cells(self) -> list[SweepCell]:
        spec = self.config.sweep
        seeds = [self.config.seed + offset for offset in range(spec.seeds)]
        return [
            SweepCell(k_h, i_bls_max, seed)
            for k_h, i_bls_max, seed in itertools.product(spec.k_h, spec.i_bls_max, seeds)
        ]

    async def async_run(self) -> pd.DataFrame:
        """Run every cell; rows come back in grid order whatever the job count."""
        cells = self.cells()
        _LOGGER.info("Starting sweep over %d runs with %d job(s)", len(cells), self.jobs)
        try:
            if self.jobs <= 1:
                rows = [run_cell(cell, self.config) for cell in cells]
            else:
                loop = asyncio.get_running_loop()
                with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                    rows = await asyncio.gather(
                        *(loop.run_in_executor(pool, run_cell, cell, self.config) for cell in cells)
                    )
        except PanotrackError as ex:
            _LOGGER.error("Sweep cell failed: %s", ex)
            raise
        return pd.DataFrame(list(rows), columns=SWEEP_COLUMNS)

    def run(self) -> pd.DataFrame:
        return asyncio.run(self.async_run())


def summarize(table: pd.DataFrame) -> pd.DataFrame:
    """Per-cell MOTA mean, range and gap, plus mean tracker time."""
    grouped = table.groupby(["k_h", "i_bls_max"], sort=True)
    summary = grouped.agg(
        runs=("mota", "size"),
        mota_mean=("mota", "mean"),
        mota_min=("mota", "min"),
        mota_max=("mota", "max"),
        motp_mean=("motp", "mean"),
        seconds_mean=("seconds", "mean"),
    ).reset_index()
    summary.insert(
        summary.columns.get_loc("mota_max") + 1,
        "mota_gap",
        summary["mota_max"] - summary["mota_min"],
    )
    return summary


def time_trend(summary: pd.DataFrame) -> pd.DataFrame:
    """Linear fit of mean time against ``i_bls_max`` for every ``k_h``.

    Budgets with a single ``i_bls_max`` value have no trend and are skipped.
    """
    rows = []
    for k_h, group in summary.groupby("k_h", sort=True):
        if group["i_bls_max"].nunique() < 2:
            continue
        fit = stats.linregress(group["i_bls_max"].to_numpy(float), group["seconds_mean"].to_numpy(float))
        rows.append(
            {
                "k_h": int(k_h),
                "slope": float(fit.slope),
                "intercept": float(fit.intercept),
                "r_squared": float(fit.rvalue**2) if np.isfinite(fit.rvalue) else float("nan"),
            }
        )
    return pd.DataFrame(rows, columns=["k_h", "slope", "intercept", "r_squared"])
