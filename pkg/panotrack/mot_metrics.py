"""CLEAR-MOT evaluation in 3D: per-frame matching, MOTA and MOTP."""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from .const import DEFAULT_MATCH_THRESHOLD, TRACK_HEADER
from .errors import EmptyGroundTruthError, MetricsError

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class Match:
    truth_id: int
    track_id: int
    distance: float


@dataclass(frozen=True)
class FrameEvents:
    """Matching outcome of one frame."""

    frame: int
    matches: tuple[Match, ...]
    misses: int
    false_positives: int
    id_switches: int


@dataclass
class MotEvents:
    """Running totals over the evaluated frames."""

    frames: list[FrameEvents] = field(default_factory=list)
    matches: int = 0
    misses: int = 0
    false_positives: int = 0
    id_switches: int = 0
    total_distance: float = 0.0
    total_truth: int = 0

    def add(self, events: FrameEvents) -> None:
        self.frames.append(events)
        self.matches += len(events.matches)
        self.misses += events.misses
        self.false_positives += events.false_positives
        self.id_switches += events.id_switches
        self.total_distance += sum(match.distance for match in events.matches)
        self.total_truth += len(events.matches) + events.misses


@dataclass(frozen=True)
class MotReport:
    """Aggregate CLEAR-MOT scores; MOTP is in meters."""

    mota: float
    motp: float
    matches: int
    misses: int
    false_positives: int
    id_switches: int
    total_truth: int
    frames: int
    match_threshold: float

    @classmethod
    def from_events(cls, events: MotEvents, threshold: float) -> MotReport:
        errors = events.misses + events.false_positives + events.id_switches
        return cls(
            mota=1.0 - errors / events.total_truth,
            motp=events.total_distance / events.matches if events.matches else 0.0,
            matches=events.matches,
            misses=events.misses,
            false_positives=events.false_positives,
            id_switches=events.id_switches,
            total_truth=events.total_truth,
            frames=len(events.frames),
            match_threshold=threshold,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def match_frame(
    truth: Mapping[int, np.ndarray],
    tracks: Mapping[int, np.ndarray],
    previous: Mapping[int, int],
    threshold: float,
    frame: int = 0,
) -> FrameEvents:
    """Match one frame's truth objects to track positions.

    Pairs from ``previous`` (truth id to last matched track id) are kept
    while both are present and within ``threshold``. The rest are matched
    to maximize the number of matches and then minimize total distance.
    A truth matched to a track other than its previous one is an
    identity switch.

    Raises:
        MetricsError: If ``threshold`` is not positive.
    """
    if not threshold > 0:
        raise MetricsError(f"match threshold must be positive, got {threshold}")

    matches: list[Match] = []
    used_tracks: set[int] = set()
    for truth_id in sorted(truth):
        track_id = previous.get(truth_id)
        if track_id is None or track_id not in tracks or track_id in used_tracks:
            continue
        distance = float(np.linalg.norm(np.asarray(truth[truth_id]) - np.asarray(tracks[track_id])))
        if distance <= threshold:
            matches.append(Match(truth_id, track_id, distance))
            used_tracks.add(track_id)

    kept = {match.truth_id for match in matches}
    free_truth = [t for t in sorted(truth) if t not in kept]
    free_tracks = [h for h in sorted(tracks) if h not in used_tracks]
    switches = 0
    if free_truth and free_tracks:
        truth_pos = np.array([truth[t] for t in free_truth], dtype=float).reshape(-1, 3)
        track_pos = np.array([tracks[h] for h in free_tracks], dtype=float).reshape(-1, 3)
        distance = np.linalg.norm(truth_pos[:, None, :] - track_pos[None, :, :], axis=-1)
        valid = distance <= threshold
        # Any extra match outweighs every achievable distance saving.
        bonus = threshold * (min(len(free_truth), len(free_tracks)) + 1) + 1.0
        cost = np.where(valid, distance - bonus, 0.0)
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            if not valid[r, c]:
                continue
            truth_id, track_id = free_truth[r], free_tracks[c]
            matches.append(Match(truth_id, track_id, float(distance[r, c])))
            if truth_id in previous and previous[truth_id] != track_id:
                switches += 1

    matches.sort(key=lambda m: m.truth_id)
    return FrameEvents(
        frame=frame,
        matches=tuple(matches),
        misses=len(truth) - len(matches),
        false_positives=len(tracks) - len(matches),
        id_switches=switches,
    )


def _positions_by_frame(records: pd.DataFrame) -> dict[int, dict[int, np.ndarray]]:
    out: dict[int, dict[int, np.ndarray]] = {}
    for frame, group in records.groupby("frame", sort=True):
        out[int(frame)] = {
            int(row.id): np.array([row.x, row.y, row.z]) for row in group.itertuples(index=False)
        }
    return out


def evaluate(
    truth: pd.DataFrame,
    tracks: pd.DataFrame,
    threshold: float = DEFAULT_MATCH_THRESHOLD,
) -> MotReport:
    """Fold ``match_frame`` over every ground-truth frame of a sequence.

    Both tables carry the ``frame,id,x,y,z`` columns. Scoring runs from
    the first to the last truth frame, so truth frames without tracks
    count as misses. Track rows outside that range are ignored. When the
    two ranges differ a warning is logged.

    Raises:
        EmptyGroundTruthError: If ``truth`` has no rows.
        MetricsError: If the frame ranges do not overlap.
    """
    if truth.empty:
        raise EmptyGroundTruthError("ground truth has no records")
    truth = truth[list(TRACK_HEADER)]
    tracks = tracks.reindex(columns=list(TRACK_HEADER))

    first, last = int(truth["frame"].min()), int(truth["frame"].max())
    if not tracks.empty:
        t_first, t_last = int(tracks["frame"].min()), int(tracks["frame"].max())
        if max(first, t_first) > min(last, t_last):
            raise MetricsError(
                f"track frames {t_first}-{t_last} do not overlap truth frames {first}-{last}"
            )
        if (t_first, t_last) != (first, last):
            _LOGGER.warning(
                "Frame ranges differ (truth %d-%d, tracks %d-%d); evaluating %d-%d",
                first, last, t_first, t_last, first, last,
            )

    truth_frames = _positions_by_frame(truth)
    track_frames = _positions_by_frame(tracks)
    events = MotEvents()
    last_known: dict[int, int] = {}
    for frame in range(first, last + 1):
        frame_events = match_frame(
            truth_frames.get(frame, {}), track_frames.get(frame, {}), last_known, threshold, frame
        )
        for match in frame_events.matches:
            last_known[match.truth_id] = match.track_id
        events.add(frame_events)

    report = MotReport.from_events(events, threshold)
    _LOGGER.info(
        "Evaluated %d frames: MOTA %.4f, MOTP %.4f m, %d switches",
        report.frames, report.mota, report.motp, report.id_switches,
    )
    return report
