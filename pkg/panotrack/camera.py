"""Distortion-free pinhole cameras and ray geometry."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCameraError

_LOGGER = logging.getLogger(__name__)

_ORTHO_TOL = 1e-9
_PARALLEL_TOL = 1e-12
WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class Ray:
    """World-frame ray with unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def point_at(self, depth: float) -> np.ndarray:
        return self.origin + depth * self.direction

    def distance_to(self, point: np.ndarray) -> float:
        offset = np.asarray(point, dtype=float) - self.origin
        return float(np.linalg.norm(offset - np.dot(offset, self.direction) * self.direction))


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera; ``X_cam = rotation @ X_world + translation``."""

    id: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=float).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidCameraError(f"camera {self.id}: focal lengths must be positive")
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=_ORTHO_TOL, rtol=0.0):
            raise InvalidCameraError(f"camera {self.id}: rotation is not orthonormal")
        if np.linalg.det(rotation) <= 0.0:
            raise InvalidCameraError(f"camera {self.id}: rotation has determinant -1")
        if not np.all(np.isfinite(translation)):
            raise InvalidCameraError(f"camera {self.id}: translation is not finite")
        rotation.flags.writeable = False
        translation.flags.writeable = False
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def look_at(
        cls,
        camera_id: int,
        position: np.ndarray,
        target: np.ndarray,
        focal: float,
        width: int,
        height: int,
    ) -> CameraModel:
        """Camera at ``position`` whose optical axis passes through ``target``.

        The image x axis stays horizontal, so ``target - position`` must not
        be vertical.
        """
        position = np.asarray(position, dtype=float)
        z_axis = np.asarray(target, dtype=float) - position
        norm = np.linalg.norm(z_axis)
        if norm == 0.0:
            raise InvalidCameraError(f"camera {camera_id}: target coincides with position")
        z_axis /= norm
        x_axis = np.cross(z_axis, WORLD_UP)
        x_norm = np.linalg.norm(x_axis)
        if x_norm < _PARALLEL_TOL:
            raise InvalidCameraError(f"camera {camera_id}: optical axis is vertical")
        x_axis /= x_norm
        y_axis = np.cross(z_axis, x_axis)
        rotation = np.vstack([x_axis, y_axis, z_axis])
        return cls(
            id=camera_id,
            fx=focal,
            fy=focal,
            cx=width / 2.0,
            cy=height / 2.0,
            rotation=rotation,
            translation=-rotation @ position,
        )

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def image_size(self) -> tuple[float, float]:
        return 2.0 * self.cx, 2.0 * self.cy

    def to_camera(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def in_image(self, u: float, v: float) -> bool:
        width, height = self.image_size
        return 0.0 <= u <= width and 0.0 <= v <= height

    def to_dict(self) -> dict:
        return {
            "id": int(self.id),
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "rotation": [float(value) for value in self.rotation.ravel()],
            "translation": [float(value) for value in self.translation],
        }


def project(camera: CameraModel, point: np.ndarray) -> tuple[float, float, float]:
    """Pixel coordinates and camera-space depth of a world point.

    Returns:
        ``(u, v, depth)``. Points with ``depth <= 0`` are behind the camera
        and their pixel coordinates are meaningless.
    """
    x_cam = camera.to_camera(point)
    depth = float(x_cam[2])
    if depth <= 0.0:
        return float("nan"), float("nan"), depth
    u = camera.fx * x_cam[0] / depth + camera.cx
    v = camera.fy * x_cam[1] / depth + camera.cy
    return float(u), float(v), depth


def back_project(camera: CameraModel, u: float, v: float) -> Ray:
    """World ray from the camera center through pixel ``(u, v)``."""
    direction_cam = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    direction = camera.rotation.T @ direction_cam
    return Ray(origin=camera.center, direction=direction / np.linalg.norm(direction))


def closest_points(
    origin_a: np.ndarray, direction_a: np.ndarray, origin_b: np.ndarray, direction_b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Closest points of ray pairs, parameters clamped at the origins.

    Inputs broadcast over leading axes; the last axis holds coordinates.
    Directions must be unit length.
    """
    w0 = origin_a - origin_b
    b = np.sum(direction_a * direction_b, axis=-1)
    d = np.sum(direction_a * w0, axis=-1)
    e = np.sum(direction_b * w0, axis=-1)
    denom = 1.0 - b * b
    parallel = denom < _PARALLEL_TOL
    safe = np.where(parallel, 1.0, denom)
    s = np.where(parallel, 0.0, (b * e - d) / safe)
    t = np.where(parallel, e, (e - b * d) / safe)
    behind_a = s < 0.0
    s = np.where(behind_a, 0.0, s)
    t = np.where(behind_a, e, t)
    behind_b = t < 0.0
    t = np.where(behind_b, 0.0, t)
    s = np.where(behind_b, np.maximum(-d, 0.0), s)
    return origin_a + s[..., None] * direction_a, origin_b + t[..., None] * direction_b


def ray_distance(ray_a: Ray, ray_b: Ray) -> float:
    """Closest distance between two rays (parameters clamped at the origins)."""
    near, far = closest_points(ray_a.origin, ray_a.direction, ray_b.origin, ray_b.direction)
    return float(np.linalg.norm(near - far))


def ray_midpoint(rays: list[Ray]) -> np.ndarray:
    """Least-squares closest point to a set of non-parallel rays.

    Solves ``sum(I - d d^T) X = sum(I - d d^T) o``.
    """
    normal = np.zeros((3, 3))
    rhs = np.zeros(3)
    for ray in rays:
        projector = np.eye(3) - np.outer(ray.direction, ray.direction)
        normal += projector
        rhs += projector @ ray.origin
    return np.linalg.lstsq(normal, rhs, rcond=None)[0]
