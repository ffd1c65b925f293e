"""PanoTrack: multi-view 3D target tracking and EKF-SLAM toolkit.

The package bundles an iterated EKF-SLAM filter, SIFT-style gradient
orientation features, a bounded multi-hypothesis multi-camera tracker,
a seeded synthetic scenario generator and a CLEAR-MOT evaluation harness.
"""

from __future__ import annotations

import json
from pathlib import Path

from .const import DOMAIN

MANIFEST: dict = json.loads(
    (Path(__file__).parent / "manifest.json").read_text(encoding="utf-8")
)

__version__: str = MANIFEST["version"]

__all__ = ["DOMAIN", "MANIFEST", "__version__"]
