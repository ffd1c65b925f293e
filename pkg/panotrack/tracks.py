"""Tracking domain types, gating and motion classification."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, fields
from typing import Iterator, Sequence

import numpy as np

from .const import (DEFAULT_C_BIRTH, DEFAULT_C_COLL, DEFAULT_C_MISS,
                    DEFAULT_DELTA_A, DEFAULT_DELTA_MIN, DEFAULT_EPS_3D,
                    DEFAULT_EPS_H, DEFAULT_EPS_PHI, DEFAULT_EPS_Z,
                    DEFAULT_FPS, DEFAULT_I_BLS_MAX, DEFAULT_K_H, DEFAULT_L_C,
                    DEFAULT_MAX_STALE_KICKS, DEFAULT_OMEGA_S_COEFF,
                    DEFAULT_THETA_S, DEFAULT_V_MAX)
from .errors import ConfigError, InsufficientHistoryError, TrackingError

_LOGGER = logging.getLogger(__name__)

# Parameters that must be strictly positive.
_POSITIVE_PARAMS = (
    "l_c", "delta_min", "eps_phi", "eps_h", "omega_s_coeff",
    "theta_s", "eps_3d", "eps_z", "v_max", "delta_a", "fps",
)


@dataclass(frozen=True)
class TrackerParams:
    """Gating constants, hypothesis budget and cost weights."""

    l_c: int = DEFAULT_L_C
    delta_min: float = DEFAULT_DELTA_MIN
    eps_phi: float = DEFAULT_EPS_PHI
    eps_h: float = DEFAULT_EPS_H
    omega_s_coeff: float = DEFAULT_OMEGA_S_COEFF
    theta_s: float = DEFAULT_THETA_S
    eps_3d: float = DEFAULT_EPS_3D
    eps_z: float = DEFAULT_EPS_Z
    v_max: float = DEFAULT_V_MAX
    delta_a: int = DEFAULT_DELTA_A
    k_h: int = DEFAULT_K_H
    i_bls_max: int = DEFAULT_I_BLS_MAX
    fps: float = DEFAULT_FPS
    c_miss: float = DEFAULT_C_MISS
    c_birth: float = DEFAULT_C_BIRTH
    c_coll: float = DEFAULT_C_COLL
    max_stale_kicks: int = DEFAULT_MAX_STALE_KICKS

    def __post_init__(self) -> None:
        for name in _POSITIVE_PARAMS:
            if not getattr(self, name) > 0:
                raise ConfigError("must be positive", key=f"tracker.{name}")
        if self.k_h < 1:
            raise ConfigError("must be at least 1", key="tracker.k_h")
        if self.max_stale_kicks < 1:
            raise ConfigError("must be at least 1", key="tracker.max_stale_kicks")
        if self.i_bls_max < 0:
            raise ConfigError("must not be negative", key="tracker.i_bls_max")
        for name in ("c_miss", "c_birth", "c_coll"):
            if getattr(self, name) < 0:
                raise ConfigError("must not be negative", key=f"tracker.{name}")

    @classmethod
    def from_dict(cls, data: dict) -> TrackerParams:
        known = {f.name for f in fields(cls)}
        return cls(**{key: value for key, value in data.items() if key in known})


@dataclass(frozen=True)
class Detection:
    """One detection window in one camera image."""

    frame: int
    camera: int
    u: float
    v: float
    size: float
    score: float = 1.0

    def __post_init__(self) -> None:
        if not self.size > 0:
            raise TrackingError(f"detection size must be positive, got {self.size}")
        if not 0.0 <= self.score <= 1.0:
            raise TrackingError(f"detection score must be in [0, 1], got {self.score}")


@dataclass(frozen=True, eq=False)
class Target3D:
    """Triangulated candidate.

    Attributes:
        position: World position in meters.
        height: Estimated target height in meters.
        support: Detections fused into this candidate, one per camera,
            sorted by camera id.
    """

    position: np.ndarray
    height: float
    support: tuple[Detection, ...] = ()

    def __post_init__(self) -> None:
        position = np.array(self.position, dtype=float).reshape(3)
        position.flags.writeable = False
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "support", tuple(sorted(self.support, key=lambda d: d.camera)))

    @property
    def cameras(self) -> frozenset[int]:
        return frozenset(det.camera for det in self.support)

    def size_in(self, camera: int) -> float | None:
        for det in self.support:
            if det.camera == camera:
                return det.size
        return None


@dataclass(frozen=True, eq=False)
class Track:
    """Persistent target identity stored as an immutable linked history.

    Extending a track shares its earlier states with the parent, so every
    hypothesis can hold its own tracks without copying histories.
    """

    id: int
    state: Target3D
    last_seen: int
    prev: Track | None = None
    velocity: np.ndarray | None = None
    length: int = 1

    def extend(self, target: Target3D, frame: int, fps: float) -> Track:
        if frame <= self.last_seen:
            raise TrackingError(
                f"track {self.id} cannot be extended at frame {frame} (last seen {self.last_seen})"
            )
        dt = (frame - self.last_seen) / fps
        velocity = (target.position - self.state.position) / dt
        return Track(
            id=self.id,
            state=target,
            last_seen=frame,
            prev=self,
            velocity=velocity,
            length=self.length + 1,
        )

    def history(self) -> Iterator[tuple[int, Target3D]]:
        """Yield ``(frame, state)`` pairs, newest first."""
        node: Track | None = self
        while node is not None:
            yield node.last_seen, node.state
            node = node.prev

    def positions(self, count: int) -> list[np.ndarray]:
        """The newest ``count`` positions, newest first."""
        out = []
        for _, state in self.history():
            if len(out) == count:
                break
            out.append(state.position)
        return out


class MotionClass(enum.Enum):
    STATIC = "static"
    MOVING = "moving"


def _window_sizes(targets: Sequence[Target3D], cameras: Sequence[int]) -> np.ndarray:
    """``(len(targets), len(cameras))`` window sizes, NaN where a camera has none."""
    column = {camera: index for index, camera in enumerate(cameras)}
    sizes = np.full((len(targets), len(cameras)), np.nan)
    for row, target in enumerate(targets):
        for det in target.support:
            sizes[row, column[det.camera]] = det.size
    return sizes


def gate_matrix(
    tracks: Sequence[Track], candidates: Sequence[Target3D], frame: int, params: TrackerParams
) -> np.ndarray:
    """Boolean ``(tracks, candidates)`` matrix: whether each candidate may continue each track.

    All of the following must hold for the frame gap ``g``:
    3D step at most ``eps_phi * g``, implied speed at most ``v_max``,
    height change at most ``eps_h * g``, ``1 <= g <= delta_a`` and, for
    every camera seeing both, a window-size change of at most
    ``omega_s_coeff`` times the previous size.
    """
    lasts = [track.state for track in tracks]
    gap = np.array([frame - track.last_seen for track in tracks], dtype=float)[:, None]
    last_pos = np.array([state.position for state in lasts], dtype=float).reshape(-1, 3)
    cand_pos = np.array([c.position for c in candidates], dtype=float).reshape(-1, 3)
    distance = np.linalg.norm(cand_pos[None, :, :] - last_pos[:, None, :], axis=-1)
    climb = np.abs(
        np.array([c.height for c in candidates], dtype=float)[None, :]
        - np.array([state.height for state in lasts], dtype=float)[:, None]
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = (
            (gap >= 1)
            & (gap <= params.delta_a)
            & (distance <= params.eps_phi * gap)
            & (distance / gap * params.fps <= params.v_max)
            & (climb <= params.eps_h * gap)
        )
        cameras = sorted({det.camera for target in (*lasts, *candidates) for det in target.support})
        if cameras:
            old = _window_sizes(lasts, cameras)[:, None, :]
            new = _window_sizes(candidates, cameras)[None, :, :]
            ok = ok & ~(np.abs(new - old) > params.omega_s_coeff * old).any(axis=-1)
    return ok


def gate(track: Track, candidate: Target3D, frame: int, params: TrackerParams) -> bool:
    """Whether ``candidate`` may continue ``track`` at ``frame``; see ``gate_matrix``."""
    return bool(gate_matrix([track], [candidate], frame, params)[0, 0])


def classify_static(positions: list[np.ndarray], params: TrackerParams) -> MotionClass:
    """Classify a point from its newest ``l_c + 1`` positions, newest first.

    Raises:
        InsufficientHistoryError: With fewer than ``l_c + 1`` positions.
    """
    needed = params.l_c + 1
    if len(positions) < needed:
        raise InsufficientHistoryError(
            f"need {needed} positions to classify motion, got {len(positions)}"
        )
    current = np.asarray(positions[0], dtype=float)
    earlier = np.asarray(positions[1:needed], dtype=float)
    spread = float(np.max(np.linalg.norm(earlier - current, axis=1)))
    return MotionClass.STATIC if spread < params.delta_min else MotionClass.MOVING


def is_static(track: Track, params: TrackerParams) -> bool:
    """Static test that treats short tracks as moving."""
    if track.length < params.l_c + 1:
        return False
    return classify_static(track.positions(params.l_c + 1), params) is MotionClass.STATIC
