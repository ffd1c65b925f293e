"""Tests for the tracking loop and the parameter sweep."""

from __future__ import annotations

import time
from dataclasses import replace
from unittest.mock import Mock

import numpy as np
import pandas as pd
import pytest

from panotrack.config import RunConfig, SweepSpec
from panotrack.coordinator import (SWEEP_COLUMNS, SweepCell, SweepCoordinator,
                                   TrackingCoordinator, run_cell, summarize,
                                   time_trend)
from panotrack.errors import ScenarioError
from panotrack.multiview_tracker import MultiViewTracker, TrackRecord
from panotrack.scenario_sim import ScenarioConfig, simulate
from panotrack.tracks import Detection, TrackerParams


@pytest.fixture
def scenario():
    """Small noisy scene."""
    return simulate(ScenarioConfig(n_targets=3, n_frames=20, seed=1))


@pytest.fixture
def small_config():
    """Two-by-two grid over short scenes."""
    return RunConfig(
        tracker=TrackerParams(k_h=2, i_bls_max=20),
        scenario=ScenarioConfig(n_targets=2, n_frames=10),
        sweep=SweepSpec(k_h=(1, 2), i_bls_max=(0, 20), seeds=2, n_frames=10),
    )


class TestTrackingCoordinator:
    """Test the timed tracking loop."""

    def test_init(self, scenario):
        """Test coordinator initialization."""
        coordinator = TrackingCoordinator(scenario.world.cameras, TrackerParams())
        assert coordinator.last_latency is None
        assert isinstance(coordinator.tracker, MultiViewTracker)

    def test_run(self, scenario):
        """Test every frame is stepped and timed."""
        coordinator = TrackingCoordinator(scenario.world.cameras, TrackerParams(k_h=3))
        result = coordinator.run(scenario.detections)
        assert sorted(result.frame_seconds) == list(range(20))
        assert result.total_seconds > 0.0
        assert coordinator.last_latency is not None
        assert result.n_tracks == len({record.id for record in result.records})
        timing = result.timing()
        assert timing["frames"] == 20
        assert [entry["frame"] for entry in timing["per_frame_seconds"]] == list(range(20))

    def test_empty_frames_are_stepped(self, scenario):
        """Test frames without detections inside the range still age tracks."""
        coordinator = TrackingCoordinator(scenario.world.cameras, TrackerParams())
        coordinator.tracker = Mock(spec=MultiViewTracker)
        coordinator.tracker.step.return_value = [TrackRecord(0, 0, 0.0, 0.0, 0.0)]
        coordinator.tracker.best.score = 1.5
        detections = [Detection(2, 0, 10.0, 10.0, 50.0), Detection(5, 1, 10.0, 10.0, 50.0)]
        result = coordinator.run(detections)
        frames = [call.args[0] for call in coordinator.tracker.step.call_args_list]
        assert frames == [2, 3, 4, 5]
        assert coordinator.tracker.step.call_args_list[1].args[1] == []
        assert result.best_score == 1.5

    def test_no_detections(self, scenario):
        result = TrackingCoordinator(scenario.world.cameras, TrackerParams()).run([])
        assert result.records == [] and result.frame_seconds == {}
        assert result.timing()["total_seconds"] == 0.0


class TestSweep:
    """Test the sweep grid and its summaries."""

    def test_cells_in_grid_order(self, small_config):
        cells = SweepCoordinator(replace(small_config, seed=10)).cells()
        assert cells[:3] == [SweepCell(1, 0, 10), SweepCell(1, 0, 11), SweepCell(1, 20, 10)]
        assert len(cells) == 8

    def test_default_grid_size(self):
        """Test the default grid is 7 k_h values by 3 budgets by 5 seeds."""
        cells = SweepCoordinator(RunConfig()).cells()
        assert len(cells) == 105
        assert len(set(cells)) == 105

    def test_run_cell(self, small_config):
        row = run_cell(SweepCell(1, 0, 3), small_config)
        assert list(row) == SWEEP_COLUMNS
        assert (row["k_h"], row["i_bls_max"], row["seed"]) == (1, 0, 3)
        assert row["mota"] <= 1.0 and row["seconds"] > 0.0

    @pytest.mark.asyncio
    async def test_async_run(self, small_config):
        """Test the sequential sweep returns one row per cell and seed."""
        table = await SweepCoordinator(small_config, jobs=1).async_run()
        assert list(table.columns) == SWEEP_COLUMNS
        assert len(table) == 8
        assert list(table["seed"][:2]) == [0, 1]

    @pytest.mark.asyncio
    async def test_failure_propagates(self, small_config, mocker, caplog):
        mocker.patch("panotrack.coordinator.run_cell", side_effect=ScenarioError("boom"))
        with pytest.raises(ScenarioError):
            await SweepCoordinator(small_config, jobs=1).async_run()
        assert "Sweep cell failed: boom" in caplog.text

    @pytest.mark.slow
    def test_parallel_matches_sequential(self, small_config):
        sequential = SweepCoordinator(small_config, jobs=1).run()
        parallel = SweepCoordinator(small_config, jobs=2).run()
        pd.testing.assert_frame_equal(
            sequential.drop(columns="seconds"), parallel.drop(columns="seconds")
        )

    def test_single_cell_summary(self):
        """Test a one-run grid has a zero MOTA gap."""
        table = pd.DataFrame([[10, 1000, 0, 0.8, 0.1, 2.0]], columns=SWEEP_COLUMNS)
        summary = summarize(table)
        assert len(summary) == 1
        assert summary.loc[0, "mota_gap"] == 0.0
        assert summary.loc[0, "runs"] == 1

    def test_summary_statistics(self):
        table = pd.DataFrame(
            [[1, 500, 0, 0.6, 0.1, 1.0], [1, 500, 1, 0.8, 0.2, 3.0], [1, 1000, 0, 0.9, 0.1, 4.0]],
            columns=SWEEP_COLUMNS,
        )
        summary = summarize(table)
        first = summary.iloc[0]
        assert (first["mota_min"], first["mota_max"]) == (0.6, 0.8)
        assert first["mota_gap"] == pytest.approx(0.2)
        assert first["seconds_mean"] == pytest.approx(2.0)
        assert list(summary.columns).index("mota_gap") == list(summary.columns).index("mota_max") + 1

    def test_time_trend(self):
        summary = pd.DataFrame(
            {"k_h": [1, 1, 1, 5], "i_bls_max": [500, 1000, 2000, 500],
             "seconds_mean": [1.5, 2.0, 3.0, 4.0]}
        )
        trend = time_trend(summary)
        assert list(trend["k_h"]) == [1]
        assert trend.loc[0, "slope"] == pytest.approx(0.001)
        assert trend.loc[0, "intercept"] == pytest.approx(1.0)
        assert trend.loc[0, "r_squared"] == pytest.approx(1.0)

    @pytest.mark.slow
    def test_largest_cell_runtime(self):
        """Test a k_h=30, i_bls_max=2000 cell over 100 frames stays well inside the sweep budget."""
        config = RunConfig(sweep=SweepSpec(n_frames=100))
        row = run_cell(SweepCell(30, 2000, 0), config)
        assert row["seconds"] < 20.0

    @pytest.mark.slow
    def test_budget_trends(self):
        """Test time grows linearly with the search budget and larger budgets are steadier."""
        config = RunConfig(
            sweep=SweepSpec(k_h=(1, 10, 30), i_bls_max=(500, 1000, 2000), seeds=5, n_frames=100)
        )
        start = time.perf_counter()
        summary = summarize(SweepCoordinator(config, jobs=1).run())
        assert time.perf_counter() - start < 300.0
        trend = time_trend(summary)
        assert (trend["r_squared"] >= 0.9).all()
        gaps = summary.pivot(index="k_h", columns="i_bls_max", values="mota_gap")
        assert np.all(gaps[2000] <= gaps[500] + 1e-12)
