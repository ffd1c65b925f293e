"""Tests for gradient orientation features."""

from __future__ import annotations

import math

import numpy as np
import pytest

from panotrack.errors import (EmptyWindowError, InvalidPatchError,
                              ZeroHistogramError)
from panotrack.feature_orientation import (NUM_BINS, ImagePatch,
                                           OrientationHistogram,
                                           dominant_orientation, gradient,
                                           keypoint_orientations, load_patch,
                                           orientation_histogram, parse_patch)


def ramp(width, height, ax, ay, offset=0.0):
    ys, xs = np.mgrid[0:height, 0:width]
    return ImagePatch(ax * xs + ay * ys + offset)


def angle_diff(a, b):
    return abs(math.remainder(a - b, 2.0 * math.pi))


class TestImagePatch:
    """Test patch construction and parsing."""

    def test_too_small(self):
        """Test patches need at least 3x3 pixels."""
        with pytest.raises(InvalidPatchError):
            ImagePatch(np.zeros((2, 5)))

    def test_non_finite(self):
        """Test NaN pixels are rejected."""
        data = np.zeros((3, 3))
        data[1, 1] = np.nan
        with pytest.raises(InvalidPatchError):
            ImagePatch(data)

    def test_from_values_count(self):
        """Test the value count must match the declared size."""
        with pytest.raises(InvalidPatchError):
            ImagePatch.from_values(3, 3, [0.0] * 8)

    def test_parse(self):
        """Test the grid text format is read row-major."""
        patch = parse_patch("4 3\n0 1 2 3\n4 5 6 7\n\n8 9 10 11\n")
        assert (patch.width, patch.height) == (4, 3)
        assert patch.data[2, 1] == 9.0

    @pytest.mark.parametrize(
        "text",
        ["", "3 3\n1 2 3\n4 5 6\n", "3 3\n1 2 3\n4 5\n7 8 9 9\n", "3 x\n1 2 3\n", "3 3\n1 2 a\n4 5 6\n7 8 9\n"],
    )
    def test_parse_malformed(self, text):
        """Test malformed grids raise InvalidPatchError."""
        with pytest.raises(InvalidPatchError):
            parse_patch(text)

    def test_load(self, tmp_path):
        """Test a patch fixture loads from disk."""
        path = tmp_path / "patch.txt"
        path.write_text("3 3\n1 1 1\n2 2 2\n3 3 3\n", encoding="utf-8")
        assert load_patch(path).data[2, 0] == 3.0


class TestGradient:
    """Test central-difference gradients on ramps."""

    @pytest.mark.parametrize(
        "ax,ay,magnitude,direction",
        [
            (1.0, 0.0, 2.0, 0.0),
            (0.0, 1.0, 2.0, math.pi / 2),
            (1.0, 1.0, 2.0 * math.sqrt(2.0), math.pi / 4),
            (-1.0, 0.0, 2.0, math.pi),
        ],
    )
    def test_ramps(self, ax, ay, magnitude, direction):
        """Test ramps give constant magnitude and direction in the interior."""
        field = gradient(ramp(6, 5, ax, ay))
        interior = field.valid
        assert interior.sum() == 4 * 3
        np.testing.assert_allclose(field.magnitude[interior], magnitude)
        np.testing.assert_allclose(field.direction[interior], direction)

    def test_border_invalid(self):
        """Test the one-pixel border is flagged invalid with zero magnitude."""
        field = gradient(ramp(5, 5, 1.0, 0.0))
        assert not field.valid[0].any() and not field.valid[:, -1].any()
        assert field.magnitude[0, 0] == 0.0

    def test_direction_range(self):
        """Test directions stay in (-pi, pi]."""
        rng = np.random.default_rng(3)
        field = gradient(ImagePatch(rng.normal(size=(12, 12))))
        assert field.direction.min() > -math.pi
        assert field.direction.max() <= math.pi


class TestHistogram:
    """Test orientation histograms."""

    def test_total_weight(self):
        """Test the votes sum to the weighted magnitudes."""
        field = gradient(ramp(5, 5, 1.0, 0.0))
        hist = orientation_histogram(field, (2, 2), 2, sigma=1e6)
        assert hist.bins.shape == (NUM_BINS,)
        assert hist.total == pytest.approx(18.0, rel=1e-9)

    def test_split_between_neighbour_bins(self):
        """Test a 0 rad vote splits evenly across the wrap-around bins."""
        hist = orientation_histogram(gradient(ramp(5, 5, 1.0, 0.0)), (2, 2), 1, sigma=1.0)
        assert hist.bins[0] == pytest.approx(hist.bins[NUM_BINS - 1])
        assert hist.bins[1:NUM_BINS - 1].sum() == 0.0

    def test_gaussian_weight(self):
        """Test a single valid pixel votes m * exp(-d^2 / 2 sigma^2)."""
        field = gradient(ramp(3, 3, 1.0, 0.0))
        hist = orientation_histogram(field, (0, 0), 1, sigma=1.0)
        assert hist.total == pytest.approx(2.0 * math.exp(-1.0))

    def test_window_without_valid_pixels(self):
        """Test a border-only window raises."""
        with pytest.raises(EmptyWindowError):
            orientation_histogram(gradient(ramp(5, 5, 1.0, 0.0)), (0, 0), 0, sigma=1.0)

    def test_window_outside_patch(self):
        """Test a window entirely outside the patch raises."""
        with pytest.raises(EmptyWindowError):
            orientation_histogram(gradient(ramp(5, 5, 1.0, 0.0)), (100, 100), 1, sigma=1.0)


class TestDominantOrientation:
    """Test peak extraction."""

    @pytest.mark.parametrize(
        "ax,ay,expected",
        [(1.0, 0.0, 0.0), (0.0, 1.0, math.pi / 2), (1.0, 1.0, math.pi / 4)],
    )
    def test_ramp_orientation(self, ax, ay, expected):
        """Test ramps yield their gradient direction as the only peak."""
        angles = keypoint_orientations(ramp(9, 9, ax, ay), (4, 4), 3, sigma=1.5)
        assert len(angles) == 1
        assert angle_diff(angles[0], expected) < 1e-9

    def test_secondary_peak(self):
        """Test peaks at 80% of the maximum are also reported."""
        bins = np.zeros(NUM_BINS)
        bins[5], bins[20], bins[30] = 10.0, 9.0, 7.0
        angles = dominant_orientation(OrientationHistogram(bins=bins))
        assert len(angles) == 2
        assert angles[0] == pytest.approx(math.radians(55.0))
        assert angles[1] == pytest.approx(math.radians(-155.0))

    def test_parabolic_refinement(self):
        """Test an asymmetric neighbourhood shifts the peak toward the heavier side."""
        bins = np.zeros(NUM_BINS)
        bins[9], bins[10], bins[11] = 2.0, 4.0, 3.0
        (angle,) = dominant_orientation(OrientationHistogram(bins=bins))
        offset = 0.5 * (2.0 - 3.0) / (2.0 - 8.0 + 3.0)
        assert angle == pytest.approx(math.radians(10.0 * (10.5 + offset)))

    def test_zero_histogram(self):
        """Test an empty histogram raises."""
        with pytest.raises(ZeroHistogramError):
            dominant_orientation(OrientationHistogram(bins=np.zeros(NUM_BINS)))

    def test_flat_patch(self):
        """Test a constant patch has no orientation."""
        with pytest.raises(ZeroHistogramError):
            keypoint_orientations(ImagePatch(np.full((7, 7), 5.0)), (3, 3), 2, sigma=1.0)


def textured_patch(rng, size=15):
    """Ramp in a random direction with mild noise, so one peak dominates."""
    direction = rng.uniform(-math.pi, math.pi)
    ys, xs = np.mgrid[0:size, 0:size]
    data = math.cos(direction) * xs + math.sin(direction) * ys
    return data + 0.02 * rng.normal(size=data.shape)


class TestInvariance:
    """Test orientation properties on randomized patches."""

    def test_rotation_equivariance(self):
        """Test rotating the patch by 90 degrees shifts the orientation by -90 degrees."""
        rng = np.random.default_rng(11)
        for _ in range(25):
            data = textured_patch(rng)
            original = keypoint_orientations(ImagePatch(data), (7, 7), 5, sigma=3.0)[0]
            rotated = keypoint_orientations(ImagePatch(np.rot90(data)), (7, 7), 5, sigma=3.0)[0]
            assert angle_diff(rotated, original - math.pi / 2) < 1e-6

    def test_brightness_invariance(self):
        """Test gain and offset changes leave orientations unchanged."""
        rng = np.random.default_rng(12)
        for _ in range(25):
            data = textured_patch(rng)
            gain, offset = rng.uniform(0.2, 5.0), rng.uniform(-50.0, 50.0)
            original = keypoint_orientations(ImagePatch(data), (7, 7), 5, sigma=3.0)
            changed = keypoint_orientations(ImagePatch(gain * data + offset), (7, 7), 5, sigma=3.0)
            assert len(changed) == len(original)
            for a, b in zip(original, changed):
                assert angle_diff(a, b) < 1e-6
