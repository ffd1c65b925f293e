"""Iterated EKF-SLAM over a joint robot-pose and landmark state.

The state vector is ``[x, y, phi, x_1, y_1, ..., x_n, y_n]`` with a full
covariance of matching size. Landmarks are observed as 2D positions in the
robot frame:

    z = R(phi)^T (l - p) + w_bias + noise

Controls are robot-frame displacements ``(du, dv, dphi)``. All operations are
pure: they return a new ``SlamState`` and never mutate their inputs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .const import DEFAULT_SLAM_N_ITER
from .errors import (FilterError, InvalidNoiseModelError, LandmarkIndexError,
                     SingularInnovationError)

_LOGGER = logging.getLogger(__name__)

POSE_DIM = 3
LANDMARK_DIM = 2
_SYMMETRY_RTOL = 1e-9
_PSD_FLOOR = -1e-12


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - float(angle)) % (2.0 * math.pi)


def _rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.flags.writeable = False
    return array


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True, slots=True)
class RobotPose:
    """Robot pose in the global frame; heading is kept in (-pi, pi]."""

    x: float
    y: float
    phi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    def as_array(self) -> np.ndarray:
        """Return ``[x, y, phi]``."""
        return np.array([self.x, self.y, self.phi])


@dataclass(frozen=True, eq=False)
class SlamState:
    """Joint pose and landmark estimate with full covariance.

    Attributes:
        pose: Current robot pose estimate.
        landmarks: ``(n, 2)`` array of landmark positions in the global frame.
        cov: ``(3 + 2n, 3 + 2n)`` covariance over pose and landmarks.
        step: Frame index, incremented by every prediction.
    """

    pose: RobotPose
    landmarks: np.ndarray = field(default_factory=lambda: np.zeros((0, LANDMARK_DIM)))
    cov: np.ndarray = field(default_factory=lambda: np.zeros((POSE_DIM, POSE_DIM)))
    step: int = 0

    def __post_init__(self) -> None:
        landmarks = np.asarray(self.landmarks, dtype=float).reshape(-1, LANDMARK_DIM)
        cov = np.asarray(self.cov, dtype=float)
        dim = POSE_DIM + LANDMARK_DIM * len(landmarks)
        if cov.shape != (dim, dim):
            raise FilterError(
                f"covariance shape {cov.shape} does not match state dimension {dim}"
            )
        object.__setattr__(self, "landmarks", _frozen(landmarks))
        object.__setattr__(self, "cov", _frozen(cov))

    @classmethod
    def initial(cls, pose: RobotPose, pose_cov: np.ndarray | None = None) -> SlamState:
        """Build a landmark-free state, optionally with an initial pose covariance."""
        cov = np.zeros((POSE_DIM, POSE_DIM)) if pose_cov is None else np.asarray(pose_cov)
        return cls(pose=pose, cov=cov)

    @classmethod
    def from_vector(cls, vector: np.ndarray, cov: np.ndarray, step: int) -> SlamState:
        """Rebuild a state from its stacked vector form."""
        pose = RobotPose(vector[0], vector[1], vector[2])
        return cls(pose=pose, landmarks=vector[POSE_DIM:], cov=cov, step=step)

    @property
    def n_landmarks(self) -> int:
        return len(self.landmarks)

    @property
    def dim(self) -> int:
        return POSE_DIM + LANDMARK_DIM * self.n_landmarks

    @property
    def vector(self) -> np.ndarray:
        """Stacked state ``[x, y, phi, landmarks...]`` as a fresh array."""
        return np.concatenate([self.pose.as_array(), self.landmarks.ravel()])

    def landmark_slice(self, landmark_index: int) -> slice:
        start = POSE_DIM + LANDMARK_DIM * landmark_index
        return slice(start, start + LANDMARK_DIM)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Process and measurement noise.

    Attributes:
        q: 3x3 pose process-noise covariance; landmarks carry no process noise.
        r_meas: 2x2 covariance of one landmark observation (strictly positive definite).
        w_bias: Constant additive correction applied to every predicted observation.
    """

    q: np.ndarray
    r_meas: np.ndarray
    w_bias: np.ndarray = field(default_factory=lambda: np.zeros(LANDMARK_DIM))

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float)
        r_meas = np.asarray(self.r_meas, dtype=float)
        w_bias = np.asarray(self.w_bias, dtype=float).reshape(LANDMARK_DIM)
        if q.shape != (POSE_DIM, POSE_DIM) or r_meas.shape != (LANDMARK_DIM, LANDMARK_DIM):
            raise InvalidNoiseModelError("q must be 3x3 and r_meas 2x2")
        for name, matrix in (("q", q), ("r_meas", r_meas)):
            if not np.allclose(matrix, matrix.T, rtol=_SYMMETRY_RTOL, atol=1e-15):
                raise InvalidNoiseModelError(f"{name} is not symmetric")
        if np.linalg.eigvalsh(q).min() < _PSD_FLOOR:
            raise InvalidNoiseModelError("q is not positive semidefinite")
        try:
            np.linalg.cholesky(r_meas)
        except np.linalg.LinAlgError as ex:
            raise InvalidNoiseModelError("r_meas is not positive definite") from ex
        if not np.all(np.isfinite(w_bias)):
            raise InvalidNoiseModelError("w_bias must be finite")
        object.__setattr__(self, "q", _frozen(q))
        object.__setattr__(self, "r_meas", _frozen(r_meas))
        object.__setattr__(self, "w_bias", _frozen(w_bias))

    @classmethod
    def isotropic(
        cls,
        sigma_xy: float,
        sigma_phi: float,
        sigma_meas: float,
        w_bias: Sequence[float] = (0.0, 0.0),
        floor: float = 0.0,
    ) -> NoiseModel:
        """Diagonal noise from standard deviations, with an optional variance floor."""
        q = np.diag([sigma_xy**2, sigma_xy**2, sigma_phi**2])
        r_meas = np.eye(LANDMARK_DIM) * max(sigma_meas**2, floor)
        return cls(q=np.maximum(q, np.diag([floor] * POSE_DIM)), r_meas=r_meas, w_bias=np.asarray(w_bias))


@dataclass(frozen=True, slots=True)
class ControlInput:
    """Robot-frame displacement over one step."""

    du: float
    dv: float
    dphi: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.du, self.dv, self.dphi)):
            raise FilterError("control input must be finite")


@dataclass(frozen=True, eq=False)
class LandmarkObservation:
    """Robot-frame position of a landmark; ``landmark_index=None`` marks a NEW landmark."""

    z: np.ndarray
    landmark_index: int | None = None

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=float).reshape(LANDMARK_DIM)
        if not np.all(np.isfinite(z)):
            raise FilterError("observation must be finite")
        object.__setattr__(self, "z", _frozen(z))

    @property
    def is_new(self) -> bool:
        return self.landmark_index is None


def _check_index(state: SlamState, landmark_index: int | None) -> int:
    if landmark_index is None or not 0 <= landmark_index < state.n_landmarks:
        raise LandmarkIndexError(
            f"landmark index {landmark_index} out of range for {state.n_landmarks} landmarks"
        )
    return int(landmark_index)


def _predict_measurement(vector: np.ndarray, landmark_index: int, w_bias: np.ndarray) -> np.ndarray:
    start = POSE_DIM + LANDMARK_DIM * landmark_index
    delta = vector[start : start + LANDMARK_DIM] - vector[:2]
    return _rotation(vector[2]).T @ delta + w_bias


def _measurement_jacobian(vector: np.ndarray, landmark_index: int) -> np.ndarray:
    start = POSE_DIM + LANDMARK_DIM * landmark_index
    c, s = math.cos(vector[2]), math.sin(vector[2])
    dx = vector[start] - vector[0]
    dy = vector[start + 1] - vector[1]
    rot_t = np.array([[c, s], [-s, c]])
    jac = np.zeros((LANDMARK_DIM, vector.size))
    jac[:, 0:2] = -rot_t
    jac[:, 2] = (-s * dx + c * dy, -c * dx - s * dy)
    jac[:, start : start + LANDMARK_DIM] = rot_t
    return jac


def _move(vector: np.ndarray, u: ControlInput) -> np.ndarray:
    moved = np.array(vector, dtype=float, copy=True)
    c, s = math.cos(vector[2]), math.sin(vector[2])
    moved[0] += c * u.du - s * u.dv
    moved[1] += s * u.du + c * u.dv
    moved[2] += u.dphi
    return moved


def measurement_model(state: SlamState, landmark_index: int, noise: NoiseModel) -> np.ndarray:
    """Predict the robot-frame observation of one landmark.

    Args:
        state: Current state.
        landmark_index: Ordinal of the landmark in ``state.landmarks``.
        noise: Noise model supplying the additive bias.

    Returns:
        2-vector ``R^T (l - p) + w_bias``.

    Raises:
        LandmarkIndexError: If the index is out of range.
    """
    index = _check_index(state, landmark_index)
    return _predict_measurement(state.vector, index, noise.w_bias)


def jacobian_F(state: SlamState, u: ControlInput) -> np.ndarray:
    """Jacobian of the motion model w.r.t. the full state; identity on landmarks."""
    jac = np.eye(state.dim)
    c, s = math.cos(state.pose.phi), math.sin(state.pose.phi)
    jac[0, 2] = -s * u.du - c * u.dv
    jac[1, 2] = c * u.du - s * u.dv
    return jac


def jacobian_H(state: SlamState, landmark_index: int) -> np.ndarray:
    """Jacobian of one landmark observation w.r.t. the full state.

    Raises:
        LandmarkIndexError: If the index is out of range.
    """
    index = _check_index(state, landmark_index)
    return _measurement_jacobian(state.vector, index)


def predict(state: SlamState, u: ControlInput, noise: NoiseModel) -> SlamState:
    """Propagate the pose through the motion model and grow the covariance."""
    jac = jacobian_F(state, u)
    vector = _move(state.vector, u)
    vector[2] = wrap_angle(vector[2])
    cov = jac @ state.cov @ jac.T
    cov[:POSE_DIM, :POSE_DIM] += noise.q
    return SlamState.from_vector(vector, _symmetrize(cov), state.step + 1)


def _kalman_gain(p_prior: np.ndarray, jac: np.ndarray, innovation_cov: np.ndarray) -> np.ndarray:
    try:
        factor = linalg.cho_factor(innovation_cov, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as ex:
        raise SingularInnovationError("innovation covariance is not invertible") from ex
    return linalg.cho_solve(factor, jac @ p_prior).T


def update(
    state: SlamState,
    observations: Sequence[LandmarkObservation],
    noise: NoiseModel,
    n_iter: int = DEFAULT_SLAM_N_ITER,
) -> SlamState:
    """Iterated EKF measurement update over existing landmarks.

    The gain, state and covariance cycle runs ``n_iter`` times. Each pass
    relinearizes the observation model about the latest iterate while the
    prior mean and covariance stay fixed. ``n_iter=1`` is the plain EKF update.

    Args:
        state: Prior state.
        observations: Observations of landmarks already in the state.
        noise: Noise model.
        n_iter: Number of relinearization passes (>= 1).

    Returns:
        Posterior state with a re-symmetrized, Joseph-form covariance.

    Raises:
        FilterError: If ``n_iter`` < 1.
        LandmarkIndexError: If an observation is NEW or out of range.
        SingularInnovationError: If the innovation covariance cannot be factorized.
    """
    if n_iter < 1:
        raise FilterError(f"n_iter must be >= 1, got {n_iter}")
    if not observations:
        return state
    indices = []
    for obs in observations:
        if obs.is_new:
            raise LandmarkIndexError("NEW landmark observations must go through augment")
        indices.append(_check_index(state, obs.landmark_index))

    measured = np.concatenate([obs.z for obs in observations])
    r_stack = linalg.block_diag(*([noise.r_meas] * len(indices)))
    prior = state.vector
    p_prior = state.cov
    iterate = prior.copy()
    gain = jac = None
    for _ in range(n_iter):
        jac = np.vstack([_measurement_jacobian(iterate, i) for i in indices])
        predicted = np.concatenate([_predict_measurement(iterate, i, noise.w_bias) for i in indices])
        gain = _kalman_gain(p_prior, jac, jac @ p_prior @ jac.T + r_stack)
        innovation = measured - predicted - jac @ (prior - iterate)
        iterate = prior + gain @ innovation

    residual = np.eye(state.dim) - gain @ jac
    cov = residual @ p_prior @ residual.T + gain @ r_stack @ gain.T
    iterate[2] = wrap_angle(iterate[2])
    _LOGGER.debug(
        "Updated %d landmark observations with %d iterations at step %d",
        len(indices),
        n_iter,
        state.step,
    )
    return SlamState.from_vector(iterate, _symmetrize(cov), state.step)


def augment(state: SlamState, obs: LandmarkObservation, noise: NoiseModel) -> SlamState:
    """Append a newly observed landmark and its linearized covariance blocks.

    Raises:
        LandmarkIndexError: If the observation is not marked NEW.
    """
    if not obs.is_new:
        raise LandmarkIndexError("augment expects an observation marked NEW")
    x, y, phi = state.pose.as_array()
    c, s = math.cos(phi), math.sin(phi)
    rot = _rotation(phi)
    local = obs.z - noise.w_bias
    landmark = np.array([x, y]) + rot @ local

    g_pose = np.array(
        [
            [1.0, 0.0, -s * local[0] - c * local[1]],
            [0.0, 1.0, c * local[0] - s * local[1]],
        ]
    )
    n = state.dim
    cov = np.zeros((n + LANDMARK_DIM, n + LANDMARK_DIM))
    cov[:n, :n] = state.cov
    cross = g_pose @ state.cov[:POSE_DIM, :]
    cov[n:, :n] = cross
    cov[:n, n:] = cross.T
    block = g_pose @ state.cov[:POSE_DIM, :POSE_DIM] @ g_pose.T + rot @ noise.r_meas @ rot.T
    cov[n:, n:] = _symmetrize(block)

    landmarks = np.vstack([state.landmarks, landmark])
    _LOGGER.debug("Augmented landmark %d at (%.3f, %.3f)", state.n_landmarks, *landmark)
    return SlamState(pose=state.pose, landmarks=landmarks, cov=cov, step=state.step)


def observe(
    state: SlamState,
    observations: Iterable[LandmarkObservation],
    noise: NoiseModel,
    n_iter: int = DEFAULT_SLAM_N_ITER,
) -> SlamState:
    """Run one measurement cycle: update on known landmarks, then augment new ones."""
    observations = list(observations)
    known = [obs for obs in observations if not obs.is_new]
    state = update(state, known, noise, n_iter=n_iter)
    for obs in observations:
        if obs.is_new:
            state = augment(state, obs, noise)
    return state


def pose_nees(state: SlamState, true_pose: RobotPose) -> float:
    """Normalized estimation error squared of the pose block.

    Returns ``nan`` when the pose covariance is not positive definite.
    """
    error = np.array(
        [
            true_pose.x - state.pose.x,
            true_pose.y - state.pose.y,
            wrap_angle(true_pose.phi - state.pose.phi),
        ]
    )
    try:
        factor = linalg.cho_factor(state.cov[:POSE_DIM, :POSE_DIM], lower=True)
    except (linalg.LinAlgError, ValueError):
        _LOGGER.debug("Pose covariance at step %d is not positive definite", state.step)
        return float("nan")
    return float(error @ linalg.cho_solve(factor, error))
