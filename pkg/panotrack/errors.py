"""Exception hierarchy for PanoTrack."""

from __future__ import annotations


class PanotrackError(Exception):
    """Base exception for all PanoTrack errors."""

    pass


class FilterError(PanotrackError):
    """EKF-SLAM filter failure."""

    pass


class LandmarkIndexError(FilterError):
    """Observation refers to a landmark that is not in the state."""

    pass


class SingularInnovationError(FilterError):
    """Innovation covariance could not be factorized."""

    pass


class InvalidNoiseModelError(FilterError):
    """Noise covariances are not symmetric (semi)definite."""

    pass


class FeatureError(PanotrackError):
    """Gradient orientation feature failure."""

    pass


class InvalidPatchError(FeatureError):
    """Image patch is malformed."""

    pass


class EmptyWindowError(FeatureError):
    """Orientation window contains no valid gradient pixel."""

    pass


class ZeroHistogramError(FeatureError):
    """Orientation histogram carries no weight."""

    pass


class TrackingError(PanotrackError):
    """Multi-view tracking failure."""

    pass


class InvalidCameraError(TrackingError):
    """Camera intrinsics or extrinsics are invalid."""

    pass


class UnknownCameraError(TrackingError):
    """A detection references a camera that was not supplied."""

    def __init__(self, camera_id: int) -> None:
        super().__init__(f"detection references unknown camera {camera_id}")
        self.camera_id = camera_id


class FrameOrderError(TrackingError):
    """Frames were fed out of order or with a mismatched index."""

    pass


class InsufficientHistoryError(TrackingError):
    """Not enough positions to classify motion."""

    pass


class ScenarioError(PanotrackError):
    """Scenario configuration is invalid."""

    pass


class MetricsError(PanotrackError):
    """Evaluation failure."""

    pass


class EmptyGroundTruthError(MetricsError):
    """Ground truth has no records."""

    pass


class DataFormatError(PanotrackError):
    """Input file does not follow the expected format."""

    pass


class ConfigError(PanotrackError):
    """Run configuration failed to parse or validate."""

    def __init__(
        self, message: str, path: str | None = None, line: int | None = None, key: str | None = None
    ) -> None:
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        key_part = f"{key}: " if key else ""
        super().__init__(f"{location}{key_part}{message}")
        self.path = path
        self.line = line
        self.key = key
