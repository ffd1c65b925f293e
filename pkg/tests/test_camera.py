"""Tests for pinhole cameras and ray geometry."""

from __future__ import annotations

import math

import numpy as np
import pytest

from panotrack.camera import (CameraModel, Ray, back_project, closest_points,
                              project, ray_distance, ray_midpoint)
from panotrack.errors import InvalidCameraError


@pytest.fixture
def camera():
    """Camera 4 m up at the arena corner looking at its center."""
    return CameraModel.look_at(0, [-1.0, -1.0, 4.0], [4.0, 3.0, 0.0], 500.0, 640, 480)


def unit(vector):
    vector = np.asarray(vector, dtype=float)
    return vector / np.linalg.norm(vector)


class TestCameraModel:
    """Test camera construction."""

    def test_look_at_axis(self, camera):
        """Test the look-at target projects to the principal point."""
        u, v, depth = project(camera, [4.0, 3.0, 0.0])
        assert (u, v) == pytest.approx((320.0, 240.0))
        assert depth == pytest.approx(math.sqrt(25 + 16 + 16))

    def test_center(self, camera):
        """Test the center is recovered from the extrinsics."""
        np.testing.assert_allclose(camera.center, [-1.0, -1.0, 4.0], atol=1e-12)

    def test_image_size(self, camera):
        assert camera.image_size == (640.0, 480.0)
        assert camera.in_image(0.0, 480.0)
        assert not camera.in_image(-0.1, 10.0)

    def test_up_is_image_up(self, camera):
        """Test a point above the target lands higher in the image."""
        _, v_low, _ = project(camera, [4.0, 3.0, 0.0])
        _, v_high, _ = project(camera, [4.0, 3.0, 1.0])
        assert v_high < v_low

    def test_rejects_non_orthonormal_rotation(self):
        with pytest.raises(InvalidCameraError):
            CameraModel(1, 500, 500, 320, 240, np.diag([1.0, 1.0, 1.1]), np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(InvalidCameraError):
            CameraModel(1, 500, 500, 320, 240, np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_rejects_non_positive_focal(self):
        with pytest.raises(InvalidCameraError):
            CameraModel(1, 0.0, 500, 320, 240, np.eye(3), np.zeros(3))

    def test_rejects_vertical_axis(self):
        with pytest.raises(InvalidCameraError):
            CameraModel.look_at(2, [0, 0, 4], [0, 0, 0], 500, 640, 480)

    def test_to_dict_layout(self, camera):
        """Test the serialized rotation is row-major."""
        data = camera.to_dict()
        assert list(data) == ["id", "fx", "fy", "cx", "cy", "rotation", "translation"]
        np.testing.assert_allclose(np.reshape(data["rotation"], (3, 3)), camera.rotation)


class TestProjection:
    """Test projection and back-projection."""

    def test_behind_camera(self, camera):
        """Test points behind the camera report non-positive depth and no pixel."""
        u, v, depth = project(camera, [-6.0, -5.0, 8.0])
        assert depth <= 0.0
        assert math.isnan(u) and math.isnan(v)

    def test_back_project_passes_through_point(self, camera):
        """Test the back-projected ray of a projection contains the point."""
        rng = np.random.default_rng(5)
        for point in rng.uniform([0, 0, 0], [8, 6, 2], size=(50, 3)):
            u, v, _ = project(camera, point)
            ray = back_project(camera, u, v)
            assert ray.distance_to(point) < 1e-9
            assert np.linalg.norm(ray.direction) == pytest.approx(1.0)
            np.testing.assert_allclose(ray.origin, camera.center, atol=1e-12)


class TestRays:
    """Test ray distances and midpoints."""

    def test_crossing_rays(self):
        """Test skew rays one meter apart."""
        a = Ray(np.array([0.0, 0.0, 0.0]), unit([1, 0, 0]))
        b = Ray(np.array([5.0, -5.0, 1.0]), unit([0, 1, 0]))
        assert ray_distance(a, b) == pytest.approx(1.0)

    def test_parallel_rays(self):
        a = Ray(np.array([0.0, 0.0, 0.0]), unit([1, 0, 0]))
        b = Ray(np.array([0.0, 2.0, 0.0]), unit([1, 0, 0]))
        assert ray_distance(a, b) == pytest.approx(2.0)

    def test_clamped_at_origin(self):
        """Test the closest approach behind an origin is clamped to the origin."""
        a = Ray(np.array([0.0, 0.0, 0.0]), unit([1, 0, 0]))
        b = Ray(np.array([-3.0, -1.0, 0.0]), unit([0, 1, 0]))
        assert ray_distance(a, b) == pytest.approx(3.0)

    def test_symmetric(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a = Ray(rng.normal(size=3), unit(rng.normal(size=3)))
            b = Ray(rng.normal(size=3), unit(rng.normal(size=3)))
            assert ray_distance(a, b) == pytest.approx(ray_distance(b, a), abs=1e-12)

    def test_midpoint_of_intersecting_rays(self):
        """Test rays from several cameras through a point meet at that point."""
        point = np.array([2.0, 3.0, 0.5])
        rays = [
            Ray(origin, unit(point - origin))
            for origin in (np.array([-1.0, -1.0, 4.0]), np.array([9.0, -1.0, 4.0]), np.array([9.0, 7.0, 4.0]))
        ]
        np.testing.assert_allclose(ray_midpoint(rays), point, atol=1e-9)

    def test_midpoint_of_two_skew_rays(self):
        """Test two skew rays give the midpoint of their common perpendicular."""
        a = Ray(np.array([0.0, 0.0, 0.0]), unit([1, 0, 0]))
        b = Ray(np.array([0.0, 0.0, 2.0]), unit([0, 1, 0]))
        np.testing.assert_allclose(ray_midpoint([a, b]), [0.0, 0.0, 1.0], atol=1e-12)

    def test_closest_points_broadcast(self):
        """Test a batched pair grid agrees with the scalar ray distance."""
        rng = np.random.default_rng(9)
        left = [Ray(rng.normal(size=3), unit(rng.normal(size=3))) for _ in range(4)]
        right = [Ray(rng.normal(size=3), unit(rng.normal(size=3))) for _ in range(5)]
        near, far = closest_points(
            np.array([r.origin for r in left])[:, None, :],
            np.array([r.direction for r in left])[:, None, :],
            np.array([r.origin for r in right])[None, :, :],
            np.array([r.direction for r in right])[None, :, :],
        )
        assert near.shape == far.shape == (4, 5, 3)
        for i, a in enumerate(left):
            for j, b in enumerate(right):
                assert np.linalg.norm(near[i, j] - far[i, j]) == pytest.approx(ray_distance(a, b), abs=1e-12)
                assert a.distance_to(near[i, j]) == pytest.approx(0.0, abs=1e-9)
                assert b.distance_to(far[i, j]) == pytest.approx(0.0, abs=1e-9)
