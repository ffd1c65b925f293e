"""Seeded synthetic pedestrian scenes seen by overlapping cameras.

Walkers follow random waypoints on a flat arena and keep at least
``MIN_WALKER_SEPARATION`` apart. Cameras sit on a ring just outside the
arena, mounted high and aimed at its center. Ground truth is the foot
point of every walker. Detections are the projected foot points, with a
window size proportional to the walker's height.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .camera import CameraModel, project as project_point
from .const import (CAMERA_HEIGHT, CAMERA_MARGIN, CLUTTER_SIZE_RANGE,
                    DEFAULT_ARENA, DEFAULT_CLUTTER_RATE, DEFAULT_FPS,
                    DEFAULT_N_CAMERAS, DEFAULT_N_FRAMES, DEFAULT_N_TARGETS,
                    DEFAULT_NOISE_PX, DEFAULT_P_MISS, DEFAULT_V_MAX_SIM,
                    DENSITY_PRESETS, FOV_FILL, IMAGE_HEIGHT, IMAGE_WIDTH,
                    MIN_SPEED_RATIO, MIN_WALKER_SEPARATION,
                    MIN_WAYPOINT_DISTANCE, PLACEMENT_ATTEMPTS, TARGET_HEIGHT,
                    TARGET_HEIGHT_JITTER, TRACK_HEADER, WAYPOINT_RETRIES)
from .errors import ScenarioError
from .tracks import Detection

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioConfig:
    """Scene shape, motion limits and detector corruption."""

    n_targets: int = DEFAULT_N_TARGETS
    n_frames: int = DEFAULT_N_FRAMES
    n_cameras: int = DEFAULT_N_CAMERAS
    arena: tuple[float, float] = DEFAULT_ARENA
    fps: float = DEFAULT_FPS
    v_max_sim: float = DEFAULT_V_MAX_SIM
    noise_px: float = DEFAULT_NOISE_PX
    p_miss: float = DEFAULT_P_MISS
    clutter_rate: float = DEFAULT_CLUTTER_RATE
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "arena", tuple(float(side) for side in self.arena))
        for name in ("n_targets", "n_frames", "n_cameras"):
            if getattr(self, name) < 1:
                raise ScenarioError(f"{name} must be at least 1")
        if len(self.arena) != 2 or min(self.arena) < 2.0 * MIN_WAYPOINT_DISTANCE:
            raise ScenarioError(
                f"arena sides must be at least {2.0 * MIN_WAYPOINT_DISTANCE} m, got {self.arena}"
            )
        if not self.fps > 0:
            raise ScenarioError("fps must be positive")
        if self.v_max_sim < 0 or self.noise_px < 0 or self.clutter_rate < 0:
            raise ScenarioError("speed, pixel noise and clutter rate must not be negative")
        if not 0.0 <= self.p_miss <= 1.0:
            raise ScenarioError(f"p_miss must be in [0, 1], got {self.p_miss}")
        if self.seed < 0:
            raise ScenarioError("seed must not be negative")

    @classmethod
    def for_density(cls, preset: str, **overrides) -> ScenarioConfig:
        """Config with the target count of a named crowd density."""
        if preset not in DENSITY_PRESETS:
            raise ScenarioError(
                f"unknown density {preset!r}, expected one of {sorted(DENSITY_PRESETS)}"
            )
        return cls(**{**overrides, "n_targets": DENSITY_PRESETS[preset]})

    def noiseless(self) -> ScenarioConfig:
        return replace(self, noise_px=0.0, p_miss=0.0, clutter_rate=0.0)


@dataclass
class World:
    """Ground truth and camera rig of a scene."""

    truth: pd.DataFrame
    heights: dict[int, float]
    cameras: list[CameraModel]


@dataclass
class Scenario:
    world: World
    detections: list[Detection] = field(default_factory=list)


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    world_seq, corrupt_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(world_seq), np.random.default_rng(corrupt_seq)


def _next_waypoint(rng: np.random.Generator, current: np.ndarray, arena: tuple[float, float]) -> np.ndarray:
    while True:
        waypoint = rng.uniform((0.0, 0.0), arena)
        if np.linalg.norm(waypoint - current) >= MIN_WAYPOINT_DISTANCE:
            return waypoint


def _clear(position: np.ndarray, others: np.ndarray) -> bool:
    if len(others) == 0:
        return True
    return bool(np.min(np.linalg.norm(others - position, axis=1)) >= MIN_WALKER_SEPARATION)


def _start_positions(rng: np.random.Generator, config: ScenarioConfig) -> np.ndarray:
    """Uniform start points at least ``MIN_WALKER_SEPARATION`` apart.

    Raises:
        ScenarioError: If the arena is too crowded to place every walker.
    """
    placed = np.empty((0, 2))
    for _ in range(config.n_targets):
        for _ in range(PLACEMENT_ATTEMPTS):
            position = rng.uniform((0.0, 0.0), config.arena)
            if _clear(position, placed):
                placed = np.vstack([placed, position])
                break
        else:
            raise ScenarioError(
                f"cannot place {config.n_targets} walkers {MIN_WALKER_SEPARATION} m apart "
                f"in a {config.arena[0]:g} x {config.arena[1]:g} m arena"
            )
    return placed


def _advance(position: np.ndarray, waypoint: np.ndarray, step: float) -> tuple[np.ndarray, bool]:
    offset = waypoint - position
    remaining = float(np.linalg.norm(offset))
    if remaining <= step:
        return waypoint.copy(), True
    return position + offset * (step / remaining), False


def _walk(rng: np.random.Generator, config: ScenarioConfig) -> np.ndarray:
    """``(n_frames, n_targets, 2)`` ground positions of random-waypoint walkers.

    Walkers move one after another within a frame, so each step is checked
    against where the others already are. A step that would come closer
    than ``MIN_WALKER_SEPARATION`` to another walker is retried toward a
    fresh waypoint; when no retry is clear the walker waits a frame.
    """
    low = MIN_SPEED_RATIO * config.v_max_sim
    positions = _start_positions(rng, config)
    waypoints = np.array([_next_waypoint(rng, start, config.arena) for start in positions])
    speeds = rng.uniform(low, config.v_max_sim, size=config.n_targets)
    others = ~np.eye(config.n_targets, dtype=bool)
    path = np.empty((config.n_frames, config.n_targets, 2))
    path[0] = positions
    for frame in range(1, config.n_frames):
        for walker in range(config.n_targets):
            step = speeds[walker] / config.fps
            for _ in range(WAYPOINT_RETRIES):
                moved, arrived = _advance(positions[walker], waypoints[walker], step)
                if _clear(moved, positions[others[walker]]):
                    break
                waypoints[walker] = _next_waypoint(rng, positions[walker], config.arena)
            else:
                moved, arrived = positions[walker], False
            positions[walker] = moved
            if arrived:
                waypoints[walker] = _next_waypoint(rng, moved, config.arena)
                speeds[walker] = rng.uniform(low, config.v_max_sim)
        path[frame] = positions
    return path


def _camera_ring(config: ScenarioConfig) -> list[CameraModel]:
    """Cameras evenly spaced around the arena, each seeing all of it."""
    width, depth = config.arena
    margin = CAMERA_MARGIN
    perimeter = 2.0 * (width + depth + 4.0 * margin)
    center = np.array([width / 2.0, depth / 2.0, 0.0])
    corners = np.array(
        [[0.0, 0.0, 0.0], [width, 0.0, 0.0], [width, depth, 0.0], [0.0, depth, 0.0]]
    )
    cameras = []
    for index in range(config.n_cameras):
        position = _on_ring(index * perimeter / config.n_cameras, width, depth, margin)
        draft = CameraModel.look_at(index, position, center, 1.0, IMAGE_WIDTH, IMAGE_HEIGHT)
        local = np.array([draft.to_camera(corner) for corner in corners])
        spread_x = np.max(np.abs(local[:, 0] / local[:, 2]))
        spread_y = np.max(np.abs(local[:, 1] / local[:, 2]))
        focal = FOV_FILL * min(draft.cx / spread_x, draft.cy / spread_y)
        cameras.append(
            CameraModel.look_at(index, position, center, focal, IMAGE_WIDTH, IMAGE_HEIGHT)
        )
    return cameras


def _on_ring(distance: float, width: float, depth: float, margin: float) -> np.ndarray:
    """Point at arc length ``distance`` along the rectangle offset by ``margin``."""
    x0, y0 = -margin, -margin
    sides = (width + 2.0 * margin, depth + 2.0 * margin)
    for dx, dy, length in (
        (1.0, 0.0, sides[0]), (0.0, 1.0, sides[1]), (-1.0, 0.0, sides[0]), (0.0, -1.0, sides[1])
    ):
        if distance <= length:
            return np.array([x0 + dx * distance, y0 + dy * distance, CAMERA_HEIGHT])
        x0 += dx * length
        y0 += dy * length
        distance -= length
    return np.array([x0, y0, CAMERA_HEIGHT])


def generate_world(config: ScenarioConfig) -> World:
    """Ground-truth walkers and the camera rig, fully determined by the seed.

    Raises:
        ScenarioError: If the walkers cannot be placed apart in the arena.
    """
    rng, _ = _rngs(config.seed)
    heights = {
        target: TARGET_HEIGHT + rng.uniform(-TARGET_HEIGHT_JITTER, TARGET_HEIGHT_JITTER)
        for target in range(config.n_targets)
    }
    path = _walk(rng, config)
    frames, targets = np.meshgrid(
        np.arange(config.n_frames), np.arange(config.n_targets), indexing="ij"
    )
    truth = pd.DataFrame(
        {
            "frame": frames.ravel(),
            "id": targets.ravel(),
            "x": path[:, :, 0].ravel(),
            "y": path[:, :, 1].ravel(),
            "z": 0.0,
        }
    )[list(TRACK_HEADER)]
    cameras = _camera_ring(config)
    _LOGGER.debug(
        "Generated %d walkers over %d frames for %d cameras",
        config.n_targets, config.n_frames, len(cameras),
    )
    return World(truth=truth, heights=heights, cameras=cameras)


def project(truth: pd.DataFrame, heights: dict[int, float], cameras: list[CameraModel]) -> list[Detection]:
    """Ideal detections of every truth point visible to each camera."""
    detections = []
    for row in truth.itertuples(index=False):
        point = np.array([row.x, row.y, row.z])
        for camera in cameras:
            u, v, depth = project_point(camera, point)
            if depth <= 0.0 or not camera.in_image(u, v):
                continue
            size = camera.fy * heights[int(row.id)] / depth
            detections.append(
                Detection(frame=int(row.frame), camera=camera.id, u=u, v=v, size=size)
            )
    detections.sort(key=lambda d: (d.frame, d.camera, d.u, d.v))
    return detections


def corrupt(
    detections: list[Detection],
    cameras: list[CameraModel],
    config: ScenarioConfig,
    rng: np.random.Generator | None = None,
) -> list[Detection]:
    """Pixel noise, random misses and Poisson clutter, in that order."""
    if rng is None:
        _, rng = _rngs(config.seed)
    noise = rng.normal(0.0, 1.0, size=(len(detections), 2)) * config.noise_px
    keep = rng.random(len(detections)) >= config.p_miss
    out = [
        Detection(det.frame, det.camera, det.u + du, det.v + dv, det.size, det.score)
        for det, (du, dv), kept in zip(detections, noise, keep)
        if kept
    ]

    counts = rng.poisson(config.clutter_rate, size=(config.n_frames, len(cameras)))
    for frame, cam_index in zip(*np.nonzero(counts)):
        camera = cameras[cam_index]
        width, height = camera.image_size
        for _ in range(counts[frame, cam_index]):
            out.append(
                Detection(
                    frame=int(frame),
                    camera=camera.id,
                    u=float(rng.uniform(0.0, width)),
                    v=float(rng.uniform(0.0, height)),
                    size=float(rng.uniform(*CLUTTER_SIZE_RANGE)),
                    score=float(rng.uniform(0.0, 1.0)),
                )
            )
    out.sort(key=lambda d: (d.frame, d.camera, d.u, d.v))
    _LOGGER.debug(
        "Corrupted %d ideal detections into %d (%d dropped)",
        len(detections), len(out), int((~keep).sum()),
    )
    return out


def simulate(config: ScenarioConfig) -> Scenario:
    """Ground truth, cameras and corrupted detections for a config."""
    _, corrupt_rng = _rngs(config.seed)
    world = generate_world(config)
    ideal = project(world.truth, world.heights, world.cameras)
    detections = corrupt(ideal, world.cameras, config, corrupt_rng)
    _LOGGER.info(
        "Simulated %d frames, %d targets, %d cameras: %d detections",
        config.n_frames, config.n_targets, len(world.cameras), len(detections),
    )
    return Scenario(world=world, detections=detections)
