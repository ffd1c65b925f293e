"""Online multi-view 3D tracking with a bounded hypothesis set."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .association import (GlobalHypothesis, TrackHypothesis, associate,
                          bls_refine, cost_function, extend_tracks,
                          hypothesis_step, k_best_assignments)
from .camera import CameraModel, Ray, back_project, closest_points, ray_midpoint
from .errors import FrameOrderError, UnknownCameraError
from .tracks import (Detection, MotionClass, Target3D, Track, TrackerParams,
                     classify_static, gate, is_static)

_LOGGER = logging.getLogger(__name__)

__all__ = [
    "Detection",
    "GlobalHypothesis",
    "MotionClass",
    "MultiViewTracker",
    "Target3D",
    "Track",
    "TrackHypothesis",
    "TrackRecord",
    "TrackerParams",
    "associate",
    "bls_refine",
    "classify_static",
    "cluster_detections",
    "cost_function",
    "extend_tracks",
    "gate",
    "hypothesis_step",
    "k_best_assignments",
    "triangulate",
]


@dataclass(frozen=True)
class TrackRecord:
    """One output row: a track position at a frame."""

    frame: int
    id: int
    x: float
    y: float
    z: float


def _ray(cameras: Mapping[int, CameraModel], detection: Detection) -> Ray:
    camera = cameras.get(detection.camera)
    if camera is None:
        raise UnknownCameraError(detection.camera)
    return back_project(camera, detection.u, detection.v)


def _implied_heights(
    cameras: Mapping[int, CameraModel], detections: Sequence[Detection], points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Camera depth of each point and the target height its window implies there.

    ``points`` has shape ``(len(detections), ..., 3)``; detection ``i``
    is measured against ``points[i]``.
    """
    depth_row = np.array([cameras[det.camera].rotation[2] for det in detections]).reshape(-1, 3)
    offset = np.array([cameras[det.camera].translation[2] for det in detections])
    scale = np.array([det.size / cameras[det.camera].fy for det in detections])
    extra = (1,) * (points.ndim - 2)
    depth = np.einsum("i...k,ik->i...", points, depth_row) + offset.reshape(-1, *extra)
    return depth, depth * scale.reshape(-1, *extra)


def _pair_geometry(
    cameras: Mapping[int, CameraModel],
    left: Sequence[Detection],
    right: Sequence[Detection],
    params: TrackerParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Ray distances between two detection lists and which pairs can be one walker.

    A pair is compatible when the detections come from different cameras,
    their rays pass within ``eps_3d``, the midpoint of the closest approach
    lies within ``eps_z`` of the ground plane, both cameras see it in
    front and the heights the two windows imply there differ by at most
    ``eps_h``.
    """
    rays_left = [_ray(cameras, det) for det in left]
    rays_right = [_ray(cameras, det) for det in right]
    origin_l = np.array([ray.origin for ray in rays_left]).reshape(-1, 1, 3)
    dir_l = np.array([ray.direction for ray in rays_left]).reshape(-1, 1, 3)
    origin_r = np.array([ray.origin for ray in rays_right]).reshape(1, -1, 3)
    dir_r = np.array([ray.direction for ray in rays_right]).reshape(1, -1, 3)
    near, far = closest_points(origin_l, dir_l, origin_r, dir_r)
    distance = np.linalg.norm(near - far, axis=-1)
    midpoint = (near + far) / 2.0
    depth_l, height_l = _implied_heights(cameras, left, midpoint)
    depth_r, height_r = _implied_heights(cameras, right, np.swapaxes(midpoint, 0, 1))
    depth_r, height_r = depth_r.T, height_r.T
    cams_l = np.array([det.camera for det in left])[:, None]
    cams_r = np.array([det.camera for det in right])[None, :]
    compatible = (
        (cams_l != cams_r)
        & (distance <= params.eps_3d)
        & (np.abs(midpoint[..., 2]) <= params.eps_z)
        & (depth_l > 0.0)
        & (depth_r > 0.0)
        & (np.abs(height_l - height_r) <= params.eps_h)
    )
    return distance, compatible


def _fuse(
    cameras: Mapping[int, CameraModel], detections: Sequence[Detection], rays: Sequence[Ray]
) -> Target3D:
    position = ray_midpoint(list(rays))
    points = np.broadcast_to(position, (len(detections), 3))
    _, heights = _implied_heights(cameras, detections, points)
    return Target3D(position=position, height=float(np.mean(heights)), support=tuple(detections))


def cluster_detections(
    detections: Sequence[Detection],
    cameras: Mapping[int, CameraModel],
    params: TrackerParams,
) -> tuple[list[Target3D], list[Detection]]:
    """Greedy cross-camera clustering of one frame's detections.

    Compatible pairs (see ``_pair_geometry``) are visited by increasing
    ray-to-ray distance. Two clusters merge when their camera sets are
    disjoint and every detection pair across them is compatible.

    Returns:
        Fused candidates in cluster order, and the detections left alone.

    Raises:
        UnknownCameraError: If a detection names a camera not supplied.
    """
    rays = [_ray(cameras, det) for det in detections]
    n = len(detections)
    distance, compatible = _pair_geometry(cameras, detections, detections, params)
    first, second = np.nonzero(np.triu(compatible, 1))
    pairs = sorted(zip(distance[first, second].tolist(), first.tolist(), second.tolist()))

    cluster_of = list(range(n))
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    order: list[int] = []
    for _, a, b in pairs:
        ca, cb = cluster_of[a], cluster_of[b]
        if ca == cb:
            continue
        left, right = members[ca], members[cb]
        cams_left = {detections[i].camera for i in left}
        if any(detections[j].camera in cams_left for j in right):
            continue
        if not compatible[np.ix_(left, right)].all():
            continue
        merged = left + right
        keep, drop = min(ca, cb), max(ca, cb)
        members[keep] = merged
        del members[drop]
        for i in merged:
            cluster_of[i] = keep
        formed = [key for key in order if key in (ca, cb)]
        if formed:
            position = order.index(formed[0])
            order = [key for key in order if key not in (ca, cb)]
            order.insert(position, keep)
        else:
            order.append(keep)

    targets = []
    for key in order:
        idx = sorted(members[key], key=lambda i: detections[i].camera)
        targets.append(_fuse(cameras, [detections[i] for i in idx], [rays[i] for i in idx]))
    singles = [detections[key] for key, idx in sorted(members.items()) if len(idx) == 1]
    return targets, singles


def triangulate(
    detections: Sequence[Detection],
    cameras: Mapping[int, CameraModel],
    params: TrackerParams,
) -> list[Target3D]:
    """3D candidates from one frame's detections across cameras.

    Returns an empty list, with a warning, when the detections span fewer
    than two cameras.
    """
    if len({det.camera for det in detections}) < 2:
        if detections:
            _LOGGER.warning(
                "Cannot triangulate %d detections from fewer than 2 cameras", len(detections)
            )
        return []
    targets, _ = cluster_detections(detections, cameras, params)
    return targets


class MultiViewTracker:
    """Stateful frame-by-frame tracker.

    Feed frames in increasing order through ``step``. Single-camera
    detections are held in ``pending`` for one frame: if a lone
    detection from another camera arrives next frame and the pair passes
    the same ray, ground and height checks as in-frame clustering,
    the two are fused into a candidate, otherwise they are dropped.
    """

    def __init__(
        self,
        cameras: Iterable[CameraModel],
        params: TrackerParams | None = None,
        seed: int = 0,
    ) -> None:
        self.cameras: dict[int, CameraModel] = {camera.id: camera for camera in cameras}
        self.params = params or TrackerParams()
        self.seed = seed
        self.hypotheses: list[TrackHypothesis] = [TrackHypothesis()]
        self.pending: list[Detection] = []
        self.frame: int | None = None
        if len(self.cameras) < 2:
            _LOGGER.warning("Tracker built with %d camera(s); nothing can be triangulated",
                            len(self.cameras))

    @property
    def best(self) -> TrackHypothesis:
        return self.hypotheses[0]

    def best_tracks(self) -> tuple[Track, ...]:
        return self.best.tracks

    def _candidates(self, frame: int, detections: Sequence[Detection]) -> list[Target3D]:
        if len({det.camera for det in detections}) >= 2:
            targets, singles = cluster_detections(detections, self.cameras, self.params)
        else:
            targets, singles = [], list(detections)

        # Pair this frame's lone detections with last frame's.
        leftovers = []
        pending = list(self.pending)
        if singles and pending:
            distance, compatible = _pair_geometry(self.cameras, singles, pending, self.params)
        else:
            distance = compatible = np.zeros((len(singles), len(pending)))
        used: set[int] = set()
        for row, det in enumerate(singles):
            options = [idx for idx in np.nonzero(compatible[row])[0].tolist() if idx not in used]
            if not options:
                leftovers.append(det)
                continue
            best_idx = min(options, key=lambda idx: distance[row, idx])
            used.add(best_idx)
            support = sorted([det, pending[best_idx]], key=lambda d: d.camera)
            targets.append(
                _fuse(self.cameras, support, [_ray(self.cameras, d) for d in support])
            )
        if len(used) < len(pending):
            _LOGGER.debug("Dropping %d unpaired detections from frame %d",
                          len(pending) - len(used), frame - 1)
        self.pending = leftovers
        return targets

    def step(self, frame: int, detections: Sequence[Detection]) -> list[TrackRecord]:
        """Advance one frame.

        Returns:
            Positions of the best hypothesis's tracks updated at this
            frame, excluding static points.

        Raises:
            FrameOrderError: If ``frame`` does not increase or a detection
                carries another frame index.
            UnknownCameraError: If a detection names an unknown camera.
        """
        if self.frame is not None and frame <= self.frame:
            raise FrameOrderError(f"frame {frame} does not follow frame {self.frame}")
        for det in detections:
            if det.frame != frame:
                raise FrameOrderError(f"detection for frame {det.frame} fed at frame {frame}")
            if det.camera not in self.cameras:
                raise UnknownCameraError(det.camera)
        if self.frame is not None and frame != self.frame + 1:
            self.pending = []
        self.frame = frame

        candidates = self._candidates(frame, detections)
        self.hypotheses = hypothesis_step(
            self.hypotheses, candidates, frame, self.params, seed=self.seed
        )
        _LOGGER.debug(
            "Frame %d: %d detections, %d candidates, %d hypotheses, best score %.6f",
            frame, len(detections), len(candidates), len(self.hypotheses), self.best.score,
        )
        records = []
        for track in self.best.tracks:
            if track.last_seen != frame or is_static(track, self.params):
                continue
            x, y, z = (float(value) for value in track.state.position)
            records.append(TrackRecord(frame=frame, id=track.id, x=x, y=y, z=z))
        return records
