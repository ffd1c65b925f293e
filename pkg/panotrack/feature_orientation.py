"""Gradient field and dominant orientation of image patches.

Central differences give the gradient of every interior pixel; the
one-pixel border is left invalid. Orientations vote into a 36-bin
histogram weighted by magnitude and a Gaussian window, and the main
direction is read from parabola-refined histogram peaks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyWindowError, InvalidPatchError, ZeroHistogramError

_LOGGER = logging.getLogger(__name__)

NUM_BINS = 36
BIN_WIDTH = 2.0 * math.pi / NUM_BINS
PEAK_RATIO = 0.8
MIN_PATCH_SIDE = 3
_ANGLE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ImagePatch:
    """Luminance patch; ``data[y, x]`` is L(x, y)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise InvalidPatchError(f"patch must be 2D, got {data.ndim}D")
        height, width = data.shape
        if width < MIN_PATCH_SIDE or height < MIN_PATCH_SIDE:
            raise InvalidPatchError(f"patch {width}x{height} is smaller than 3x3")
        if not np.all(np.isfinite(data)):
            raise InvalidPatchError("patch contains non-finite values")
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_values(cls, width: int, height: int, values: list[float]) -> ImagePatch:
        """Build a patch from row-major values."""
        if len(values) != width * height:
            raise InvalidPatchError(
                f"expected {width * height} values for a {width}x{height} patch, got {len(values)}"
            )
        return cls(np.asarray(values, dtype=float).reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class GradientField:
    """Per-pixel magnitude and direction; ``valid`` is False on the border."""

    magnitude: np.ndarray
    direction: np.ndarray
    valid: np.ndarray


@dataclass(frozen=True, eq=False)
class OrientationHistogram:
    """36 weights; bin ``i`` covers [10i, 10(i+1)) degrees of direction shifted to [0, 360)."""

    bins: np.ndarray

    @property
    def total(self) -> float:
        return float(self.bins.sum())


def parse_patch(text: str) -> ImagePatch:
    """Parse the plain-text grid format: ``width height`` then rows of values."""
    lines = [line.split() for line in text.splitlines() if line.strip()]
    if not lines:
        raise InvalidPatchError("empty patch text")
    try:
        width, height = (int(token) for token in lines[0])
        values = [float(token) for row in lines[1:] for token in row]
    except ValueError as ex:
        raise InvalidPatchError(f"malformed patch text: {ex}") from ex
    rows = lines[1:]
    if len(rows) != height or any(len(row) != width for row in rows):
        raise InvalidPatchError(f"grid does not match declared size {width}x{height}")
    return ImagePatch.from_values(width, height, values)


def load_patch(path: str | Path) -> ImagePatch:
    """Read a patch fixture from disk."""
    return parse_patch(Path(path).read_text(encoding="utf-8"))


def gradient(patch: ImagePatch) -> GradientField:
    """Central-difference gradient magnitude and direction of every interior pixel."""
    data = patch.data
    magnitude = np.zeros_like(data)
    direction = np.zeros_like(data)
    valid = np.zeros(data.shape, dtype=bool)

    dx = data[1:-1, 2:] - data[1:-1, :-2]
    dy = data[2:, 1:-1] - data[:-2, 1:-1]
    theta = np.arctan2(dy, dx)
    theta = np.where(theta <= -math.pi, theta + 2.0 * math.pi, theta)

    magnitude[1:-1, 1:-1] = np.hypot(dx, dy)
    direction[1:-1, 1:-1] = theta
    valid[1:-1, 1:-1] = True
    return GradientField(magnitude=magnitude, direction=direction, valid=valid)


def orientation_histogram(
    field: GradientField,
    center: tuple[int, int],
    radius: int,
    sigma: float,
) -> OrientationHistogram:
    """Gaussian-weighted orientation histogram around a keypoint.

    Every valid pixel in the square window ``center +/- radius`` votes its
    direction with weight ``m * exp(-d^2 / (2 sigma^2))``, split linearly
    between the two nearest bin centers.

    Args:
        field: Gradient field of the patch.
        center: Keypoint ``(x, y)`` in pixels.
        radius: Half-side of the window in pixels.
        sigma: Spatial Gaussian standard deviation in pixels.

    Returns:
        The accumulated histogram.

    Raises:
        EmptyWindowError: If the window holds no valid pixel.
    """
    cx, cy = center
    height, width = field.magnitude.shape
    x0, x1 = max(cx - radius, 0), min(cx + radius, width - 1)
    y0, y1 = max(cy - radius, 0), min(cy + radius, height - 1)
    if x0 > x1 or y0 > y1:
        raise EmptyWindowError(f"window around {center} lies outside the patch")

    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    mask = field.valid[ys, xs]
    if not mask.any():
        raise EmptyWindowError(f"window around {center} has no valid gradient")
    ys, xs = ys[mask], xs[mask]

    dist_sq = (xs - cx) ** 2 + (ys - cy) ** 2
    weights = field.magnitude[ys, xs] * np.exp(-dist_sq / (2.0 * sigma**2))
    angles = np.mod(field.direction[ys, xs], 2.0 * math.pi)

    position = angles / BIN_WIDTH - 0.5
    lower = np.floor(position)
    frac = position - lower
    lower = lower.astype(int) % NUM_BINS
    upper = (lower + 1) % NUM_BINS

    bins = np.zeros(NUM_BINS)
    np.add.at(bins, lower, weights * (1.0 - frac))
    np.add.at(bins, upper, weights * frac)
    return OrientationHistogram(bins=bins)


def _refine_peak(bins: np.ndarray, index: int) -> float:
    left = bins[(index - 1) % NUM_BINS]
    peak = bins[index]
    right = bins[(index + 1) % NUM_BINS]
    denom = left - 2.0 * peak + right
    offset = 0.0 if denom == 0.0 else 0.5 * (left - right) / denom
    angle = (index + 0.5 + offset) * BIN_WIDTH
    wrapped = math.pi - (math.pi - angle) % (2.0 * math.pi)
    return wrapped


def dominant_orientation(hist: OrientationHistogram) -> list[float]:
    """Main directions of a histogram, in radians within (-pi, pi].

    The global peak is always returned; every other local peak reaching
    80% of it is returned too. Each peak is refined by a parabola through
    the bin and its two neighbours. Peaks refining to the same angle are
    reported once.

    Raises:
        ZeroHistogramError: If the histogram carries no weight.
    """
    bins = np.asarray(hist.bins, dtype=float)
    peak_value = bins.max()
    if not peak_value > 0.0:
        raise ZeroHistogramError("orientation histogram has no weight")

    candidates = [int(np.argmax(bins))]
    for index in range(NUM_BINS):
        value = bins[index]
        if (
            value >= PEAK_RATIO * peak_value
            and value > bins[(index - 1) % NUM_BINS]
            and value >= bins[(index + 1) % NUM_BINS]
        ):
            candidates.append(index)

    ordered = sorted(set(candidates), key=lambda i: (-bins[i], i))
    angles: list[float] = []
    for index in ordered:
        angle = _refine_peak(bins, index)
        if all(abs(math.remainder(angle - seen, 2.0 * math.pi)) > _ANGLE_TOL for seen in angles):
            angles.append(angle)
    _LOGGER.debug("Found %d dominant orientations", len(angles))
    return angles


def keypoint_orientations(
    patch: ImagePatch, center: tuple[int, int], radius: int, sigma: float
) -> list[float]:
    """Gradient, histogram and peak extraction in one call."""
    return dominant_orientation(orientation_histogram(gradient(patch), center, radius, sigma))
