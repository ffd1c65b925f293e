"""End-to-end tests of the ``panotrack`` command line.

These run whole pipelines through the file formats and are kept out of
the default unit run.

To run these tests:
    python -m pytest tests/test_integration.py -m integration -v -s
"""
from __future__ import annotations

import json

import pytest

from panotrack import __version__
from panotrack.cli import build_parser, main, setup_logging
from panotrack.const import (CAMERAS_FILE, DETECTIONS_FILE, REPORT_FILE,
                             SLAM_LANDMARKS_FILE, SLAM_NEES_FILE,
                             SLAM_POSES_FILE, SLAM_SUMMARY_FILE, SWEEP_FILE,
                             SWEEP_SUMMARY_FILE, SWEEP_TREND_FILE, TIMING_FILE,
                             TRACKS_FILE, TRUTH_FILE)

pytestmark = [pytest.mark.integration]


@pytest.fixture(autouse=True)
def quiet_logging(monkeypatch):
    monkeypatch.setenv("PANOTRACK_LOG", "WARNING")


@pytest.fixture
def config_file(tmp_path):
    """Small scene and grid so every command finishes quickly."""
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps({
            "scenario": {"n_targets": 3, "n_frames": 25},
            "tracker": {"k_h": 3, "i_bls_max": 50},
            "sweep": {"k_h": [1, 3], "i_bls_max": [0, 50], "seeds": 2, "n_frames": 15},
            "slam": {"n_steps": 15, "runs": 3},
        }),
        encoding="utf-8",
    )
    return path


def run_pipeline(config_file, out):
    assert main(["simulate", "--config", str(config_file), "--out", str(out), "--seed", "4"]) == 0
    assert main([
        "track", str(out / DETECTIONS_FILE), str(out / CAMERAS_FILE),
        "--config", str(config_file), "--out", str(out), "--seed", "4",
    ]) == 0
    assert main([
        "evaluate", str(out / TRUTH_FILE), str(out / TRACKS_FILE),
        "--config", str(config_file), "--out", str(out),
    ]) == 0


class TestPipeline:
    """Test simulate, track and evaluate chained through files."""

    def test_simulate_track_evaluate(self, config_file, tmp_path, capsys):
        out = tmp_path / "run"
        run_pipeline(config_file, out)
        for name in (DETECTIONS_FILE, CAMERAS_FILE, TRUTH_FILE, TRACKS_FILE, TIMING_FILE, REPORT_FILE):
            assert (out / name).is_file()
        report = json.loads((out / REPORT_FILE).read_text(encoding="utf-8"))
        assert report["mota"] <= 1.0 and 0 < report["total_truth"] <= 3 * 25
        printed = json.loads(capsys.readouterr().out)
        assert printed == report
        timing = json.loads((out / TIMING_FILE).read_text(encoding="utf-8"))
        assert timing["frames"] == 25

    def test_deterministic_outputs(self, config_file, tmp_path):
        """Test two runs with the same seed write identical files."""
        first, second = tmp_path / "a", tmp_path / "b"
        run_pipeline(config_file, first)
        run_pipeline(config_file, second)
        for name in (DETECTIONS_FILE, CAMERAS_FILE, TRUTH_FILE, TRACKS_FILE, REPORT_FILE):
            assert (first / name).read_bytes() == (second / name).read_bytes()


class TestCommands:
    """Test the remaining commands and the error surface."""

    def test_sweep(self, config_file, tmp_path, capsys):
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(config_file), "--out", str(out)]) == 0
        for name in (SWEEP_FILE, SWEEP_SUMMARY_FILE, SWEEP_TREND_FILE):
            assert (out / name).is_file()
        lines = (out / SWEEP_FILE).read_text(encoding="utf-8").splitlines()
        assert lines[0] == "k_h,i_bls_max,seed,mota,motp,seconds"
        assert len(lines) == 1 + 2 * 2 * 2
        assert "mota_gap" in capsys.readouterr().out

    def test_slam_demo(self, config_file, tmp_path, capsys):
        out = tmp_path / "slam"
        assert main(["slam-demo", "--config", str(config_file), "--out", str(out)]) == 0
        for name in (SLAM_POSES_FILE, SLAM_LANDMARKS_FILE, SLAM_NEES_FILE, SLAM_SUMMARY_FILE):
            assert (out / name).is_file()
        summary = json.loads(capsys.readouterr().out)
        assert summary["runs"] == 3

    def test_missing_input(self, tmp_path, capsys):
        """Test a missing file exits 1 with a one-line error."""
        code = main(["track", str(tmp_path / "nope.csv"), str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert code == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        assert err[0].startswith("panotrack: error=FileNotFoundError message=")

    def test_bad_config(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "tracker": {"k_h": 0}\n}\n', encoding="utf-8")
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 1
        err = capsys.readouterr().err
        assert "error=ConfigError" in err and "tracker.k_h" in err and f"{path}:2:" in err

    def test_bad_override(self, tmp_path, capsys):
        assert main(["simulate", "--jobs", "0", "--out", str(tmp_path)]) == 1
        assert "error=ConfigError" in capsys.readouterr().err

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["--version"])
        assert info.value.code == 0
        assert capsys.readouterr().out.strip() == f"panotrack {__version__}"

    def test_unknown_log_level_warns(self, monkeypatch, caplog):
        monkeypatch.setenv("PANOTRACK_LOG", "chatty")
        setup_logging()
        assert "Unknown log level" in caplog.text
