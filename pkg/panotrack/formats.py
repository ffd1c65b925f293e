"""Readers and writers for the detection, camera, truth and track files."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .camera import CameraModel
from .const import CAMERA_KEYS, DETECTION_HEADER, FLOAT_FORMAT, TRACK_HEADER
from .errors import DataFormatError, TrackingError
from .tracks import Detection

_LOGGER = logging.getLogger(__name__)

# Column metadata: header name -> dtype
DETECTION_COLUMNS: dict[str, str] = {
    "frame": "int64",
    "camera": "int64",
    "u": "float64",
    "v": "float64",
    "size": "float64",
    "score": "float64",
}
RECORD_COLUMNS: dict[str, str] = {
    "frame": "int64",
    "id": "int64",
    "x": "float64",
    "y": "float64",
    "z": "float64",
}


def write_table(path: Path, frame: pd.DataFrame) -> None:
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    _LOGGER.info("Wrote %d rows to %s", len(frame), path)


def _read_csv(path: Path, columns: dict[str, str]) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as ex:
        raise DataFormatError(f"{path}: file is empty") from ex
    except pd.errors.ParserError as ex:
        raise DataFormatError(f"{path}: {ex}") from ex
    header = tuple(frame.columns)
    if header != tuple(columns):
        raise DataFormatError(f"{path}: expected header {','.join(columns)}, got {','.join(header)}")
    try:
        return frame.astype(columns)
    except (TypeError, ValueError) as ex:
        raise DataFormatError(f"{path}: {ex}") from ex


def detections_frame(detections: Iterable[Detection]) -> pd.DataFrame:
    rows = [(d.frame, d.camera, d.u, d.v, d.size, d.score) for d in detections]
    frame = pd.DataFrame(rows, columns=list(DETECTION_HEADER)).astype(DETECTION_COLUMNS)
    return frame.sort_values(["frame", "camera", "u", "v"], kind="stable").reset_index(drop=True)


def write_detections(path: Path, detections: Iterable[Detection]) -> None:
    write_table(path, detections_frame(detections))


def read_detections(path: Path) -> list[Detection]:
    """Parse a detection CSV.

    Raises:
        DataFormatError: On a wrong header, bad values or an invalid row.
    """
    frame = _read_csv(path, DETECTION_COLUMNS)
    detections = []
    for line, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            detections.append(
                Detection(int(row.frame), int(row.camera), row.u, row.v, row.size, row.score)
            )
        except TrackingError as ex:
            raise DataFormatError(f"{path}:{line}: {ex}") from ex
    return detections


def records_frame(records: Iterable[Any] | pd.DataFrame) -> pd.DataFrame:
    """Normalize truth or track records into a sorted ``frame,id,x,y,z`` table."""
    if isinstance(records, pd.DataFrame):
        frame = records[list(TRACK_HEADER)]
    else:
        rows = [(r.frame, r.id, r.x, r.y, r.z) for r in records]
        frame = pd.DataFrame(rows, columns=list(TRACK_HEADER))
    frame = frame.astype(RECORD_COLUMNS)
    return frame.sort_values(["frame", "id"], kind="stable").reset_index(drop=True)


def write_records(path: Path, records: Iterable[Any] | pd.DataFrame) -> None:
    write_table(path, records_frame(records))


def read_records(path: Path) -> pd.DataFrame:
    return _read_csv(path, RECORD_COLUMNS)


def write_cameras(path: Path, cameras: Sequence[CameraModel]) -> None:
    write_json(path, [camera.to_dict() for camera in sorted(cameras, key=lambda c: c.id)])


def read_cameras(path: Path) -> list[CameraModel]:
    """Parse a camera JSON array.

    Raises:
        DataFormatError: On malformed JSON, wrong keys or wrong shapes.
        InvalidCameraError: If a camera's intrinsics or rotation are invalid.
    """
    path = Path(path)
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as ex:
        raise DataFormatError(f"{path}:{ex.lineno}: {ex.msg}") from ex
    if not isinstance(entries, list):
        raise DataFormatError(f"{path}: expected a JSON array of cameras")
    cameras = []
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict) or set(entry) != set(CAMERA_KEYS):
            raise DataFormatError(
                f"{path}: camera #{index} must have exactly the keys {','.join(CAMERA_KEYS)}"
            )
        try:
            rotation = np.asarray(entry["rotation"], dtype=float)
            translation = np.asarray(entry["translation"], dtype=float)
            intrinsics = {key: float(entry[key]) for key in ("fx", "fy", "cx", "cy")}
            camera_id = int(entry["id"])
        except (TypeError, ValueError) as ex:
            raise DataFormatError(f"{path}: camera #{index}: {ex}") from ex
        if rotation.shape != (9,) or translation.shape != (3,):
            raise DataFormatError(
                f"{path}: camera {camera_id} needs 9 rotation and 3 translation values"
            )
        cameras.append(
            CameraModel(
                id=camera_id,
                rotation=rotation.reshape(3, 3),
                translation=translation,
                **intrinsics,
            )
        )
    ids = [camera.id for camera in cameras]
    if len(set(ids)) != len(ids):
        raise DataFormatError(f"{path}: duplicate camera ids")
    return cameras


def write_json(path: Path, data: Any) -> None:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    _LOGGER.info("Wrote %s", path)
