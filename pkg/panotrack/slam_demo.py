"""Robot loop simulation driving the EKF-SLAM filter.

A robot drives one lap of a circle while observing a ring of point
landmarks in its own frame at every step. Repeating the lap over many
seeds gives the Monte-Carlo pose NEES and the landmark accuracy of the
iterated update against a single linearization.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from .const import (DEFAULT_SLAM_LANDMARKS, DEFAULT_SLAM_N_ITER,
                    DEFAULT_SLAM_RADIUS, DEFAULT_SLAM_RUNS,
                    DEFAULT_SLAM_SIGMA_MEAS, DEFAULT_SLAM_SIGMA_PHI,
                    DEFAULT_SLAM_SIGMA_XY, DEFAULT_SLAM_STEPS, NOISE_FLOOR)
from .ekf_core import (POSE_DIM, ControlInput, LandmarkObservation, NoiseModel,
                       RobotPose, SlamState, observe, pose_nees, predict,
                       wrap_angle)

_LOGGER = logging.getLogger(__name__)

LANDMARK_RING_RATIO = 0.6
LANDMARK_JITTER = 0.1  # fraction of the loop radius
NEES_CONFIDENCE = 0.95


@dataclass(frozen=True)
class SlamDemoConfig:
    n_steps: int = DEFAULT_SLAM_STEPS
    n_landmarks: int = DEFAULT_SLAM_LANDMARKS
    radius: float = DEFAULT_SLAM_RADIUS
    sigma_xy: float = DEFAULT_SLAM_SIGMA_XY
    sigma_phi: float = DEFAULT_SLAM_SIGMA_PHI
    sigma_meas: float = DEFAULT_SLAM_SIGMA_MEAS
    n_iter: int = DEFAULT_SLAM_N_ITER
    w_bias: tuple[float, float] = (0.0, 0.0)
    runs: int = DEFAULT_SLAM_RUNS

    def noise_model(self) -> NoiseModel:
        return NoiseModel.isotropic(
            self.sigma_xy, self.sigma_phi, self.sigma_meas, self.w_bias, floor=NOISE_FLOOR
        )

    def control(self) -> ControlInput:
        return ControlInput(
            du=2.0 * math.pi * self.radius / self.n_steps,
            dv=0.0,
            dphi=2.0 * math.pi / self.n_steps,
        )


@dataclass
class SlamRun:
    """Trajectory, map and consistency record of one lap."""

    poses: pd.DataFrame
    landmarks: pd.DataFrame
    nees: np.ndarray
    final_pose_error: float
    landmark_rmse: float


@dataclass
class SlamDemoResult:
    first_run: SlamRun
    mean_nees: float
    nees_by_step: np.ndarray
    nees_band: tuple[float, float]
    landmark_rmse: dict[int, float] = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "runs": int(self.nees_by_step.shape[0]),
            "mean_nees": None if math.isnan(self.mean_nees) else self.mean_nees,
            "nees_band": list(self.nees_band),
            "final_pose_error": self.first_run.final_pose_error,
            "landmark_rmse": {f"n_iter_{k}": v for k, v in sorted(self.landmark_rmse.items())},
        }


def landmark_layout(config: SlamDemoConfig, rng: np.random.Generator) -> np.ndarray:
    """Landmarks on a jittered ring inside the robot's loop."""
    center = np.array([0.0, config.radius])
    ring = LANDMARK_RING_RATIO * config.radius
    angles = 2.0 * math.pi * np.arange(config.n_landmarks) / config.n_landmarks
    offsets = np.column_stack([np.cos(angles), np.sin(angles)]) * ring
    jitter = rng.uniform(-1.0, 1.0, size=offsets.shape) * LANDMARK_JITTER * config.radius
    return center + offsets + jitter


def _move(pose: np.ndarray, u: ControlInput) -> np.ndarray:
    c, s = math.cos(pose[2]), math.sin(pose[2])
    return np.array(
        [pose[0] + c * u.du - s * u.dv, pose[1] + s * u.du + c * u.dv, wrap_angle(pose[2] + u.dphi)]
    )


def _sense(pose: np.ndarray, landmarks: np.ndarray, config: SlamDemoConfig,
           rng: np.random.Generator) -> np.ndarray:
    c, s = math.cos(pose[2]), math.sin(pose[2])
    rot_t = np.array([[c, s], [-s, c]])
    local = (landmarks - pose[:2]) @ rot_t.T
    meas_noise = rng.normal(0.0, 1.0, size=local.shape) * config.sigma_meas
    return local + np.asarray(config.w_bias) + meas_noise


def simulate_run(config: SlamDemoConfig, seed: int | tuple[int, ...], n_iter: int | None = None) -> SlamRun:
    """Run the filter over one noisy lap.

    The truth, landmarks and noise draws depend only on ``seed``, so runs
    with different ``n_iter`` and the same seed are paired.
    """
    n_iter = config.n_iter if n_iter is None else n_iter
    rng = np.random.default_rng(seed)
    noise = config.noise_model()
    u = config.control()
    landmarks = landmark_layout(config, rng)
    process_std = np.array([config.sigma_xy, config.sigma_xy, config.sigma_phi])

    truth = np.zeros(POSE_DIM)
    state = SlamState.initial(RobotPose(0.0, 0.0, 0.0))
    z = _sense(truth, landmarks, config, rng)
    state = observe(state, [LandmarkObservation(zi) for zi in z], noise, n_iter=n_iter)

    rows = [(0, *state.pose.as_array(), *truth)]
    nees = np.empty(config.n_steps)
    for step in range(1, config.n_steps + 1):
        truth = _move(truth, u) + rng.normal(0.0, 1.0, size=POSE_DIM) * process_std
        truth[2] = wrap_angle(truth[2])
        state = predict(state, u, noise)
        z = _sense(truth, landmarks, config, rng)
        observations = [LandmarkObservation(zi, landmark_index=i) for i, zi in enumerate(z)]
        state = observe(state, observations, noise, n_iter=n_iter)
        nees[step - 1] = pose_nees(state, RobotPose(*truth))
        rows.append((step, *state.pose.as_array(), *truth))

    poses = pd.DataFrame(rows, columns=["step", "x", "y", "phi", "true_x", "true_y", "true_phi"])
    landmark_table = pd.DataFrame(
        {
            "id": np.arange(config.n_landmarks),
            "x": state.landmarks[:, 0],
            "y": state.landmarks[:, 1],
            "true_x": landmarks[:, 0],
            "true_y": landmarks[:, 1],
        }
    )
    errors = state.landmarks - landmarks
    return SlamRun(
        poses=poses,
        landmarks=landmark_table,
        nees=nees,
        final_pose_error=float(np.hypot(*(state.pose.as_array()[:2] - truth[:2]))),
        landmark_rmse=float(np.sqrt(np.mean(np.sum(errors**2, axis=1)))),
    )


def nees_band(runs: int, confidence: float = NEES_CONFIDENCE) -> tuple[float, float]:
    """Two-sided chi-square band for the mean of ``runs`` 3-dof NEES samples."""
    dof = POSE_DIM * runs
    tail = (1.0 - confidence) / 2.0
    low, high = stats.chi2.ppf([tail, 1.0 - tail], dof) / runs
    return float(low), float(high)


def run_demo(config: SlamDemoConfig, seed: int = 0) -> SlamDemoResult:
    """Monte-Carlo laps with the configured filter, plus paired 1- and 2-iteration laps.

    Every lap is simulated once per distinct iteration count in
    ``{n_iter, 1, 2}`` from the same seed, so the laps of one run share
    their noise. NEES comes from the ``n_iter`` laps; with ``n_iter`` of
    1 or 2 those laps are reused for the RMSE comparison, otherwise each
    run costs three laps.
    """
    by_step = np.empty((config.runs, config.n_steps))
    first: SlamRun | None = None
    rmse: dict[int, list[float]] = {1: [], 2: []}
    counts = sorted({config.n_iter, *rmse})
    for run in range(config.runs):
        laps = {n_iter: simulate_run(config, (seed, run), n_iter) for n_iter in counts}
        result = laps[config.n_iter]
        by_step[run] = result.nees
        if first is None:
            first = result
        for n_iter, values in rmse.items():
            values.append(laps[n_iter].landmark_rmse)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean_nees = float(np.nanmean(by_step))
    band = nees_band(config.runs)
    _LOGGER.info(
        "SLAM demo over %d runs: mean NEES %.3f (band %.3f-%.3f)",
        config.runs, mean_nees, band[0], band[1],
    )
    return SlamDemoResult(
        first_run=first,
        mean_nees=mean_nees,
        nees_by_step=by_step,
        nees_band=band,
        landmark_rmse={k: float(np.mean(v)) for k, v in rmse.items()},
    )
