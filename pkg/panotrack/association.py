"""Global hypotheses: scoring, k-best assignment and local-search refinement.

Each frame, every surviving hypothesis is extended by the k cheapest
pairwise assignments of its live tracks to the frame's candidates (Murty
partitioning over an augmented miss/birth matrix), plus a locally refined
copy of the cheapest one. Candidates left unassigned open new tracks.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .const import MISS
from .tracks import Target3D, Track, TrackerParams, gate_matrix

_LOGGER = logging.getLogger(__name__)

_IMPROVE_TOL = 1e-12
_KICK_MOVES = 2


@dataclass(frozen=True)
class GlobalHypothesis:
    """One frame's track-to-candidate assignment.

    Attributes:
        assignment: Candidate index per track, or ``MISS``.
        births: Candidate indices opening new tracks, ascending.
        score: Frame cost of the assignment (lower is better).
        evaluations: Local-search moves evaluated to reach it.
    """

    assignment: tuple[int, ...]
    births: tuple[int, ...]
    score: float
    evaluations: int = field(default=0, compare=False)


@dataclass(frozen=True, eq=False)
class TrackHypothesis:
    """Track set of one hypothesis with its cumulative score."""

    tracks: tuple[Track, ...] = ()
    score: float = 0.0
    next_id: int = 0
    last: GlobalHypothesis | None = None

    def signature(self) -> tuple:
        return tuple(
            (track.id, track.last_seen, tuple(track.state.position)) for track in self.tracks
        )


def births_of(assignment: Sequence[int], n_candidates: int) -> tuple[int, ...]:
    used = set(assignment)
    return tuple(c for c in range(n_candidates) if c not in used)


def _collision_matrix(starts: np.ndarray, ends: np.ndarray, theta_s: float) -> np.ndarray:
    """Pairwise closest approach of equally-timed segments below ``theta_s``."""
    if len(starts) == 0:
        return np.zeros((0, 0), dtype=bool)
    steps = ends - starts
    d0 = starts[:, None, :] - starts[None, :, :]
    dd = steps[:, None, :] - steps[None, :, :]
    denom = np.einsum("ijk,ijk->ij", dd, dd)
    safe = np.where(denom > 0.0, denom, 1.0)
    tau = np.where(denom > 0.0, np.clip(-np.einsum("ijk,ijk->ij", d0, dd) / safe, 0.0, 1.0), 0.0)
    closest = np.linalg.norm(d0 + tau[..., None] * dd, axis=-1)
    collide = closest < theta_s
    np.fill_diagonal(collide, False)
    return collide


def cost_function(
    assignment: Sequence[int],
    tracks: Sequence[Track],
    candidates: Sequence[Target3D],
    params: TrackerParams,
) -> float:
    """Frame cost of an assignment, computed from scratch.

    Matched 3D distances, plus ``c_miss`` per missed track, ``c_birth``
    per unassigned candidate and ``c_coll`` per pair of matched tracks or
    births whose motion segments come closer than ``theta_s``.
    """
    total = 0.0
    starts, ends = [], []
    for track, index in zip(tracks, assignment):
        if index == MISS:
            total += params.c_miss
            continue
        start = track.state.position
        end = candidates[index].position
        total += float(np.linalg.norm(end - start))
        starts.append(start)
        ends.append(end)
    births = births_of(assignment, len(candidates))
    total += params.c_birth * len(births)
    for index in births:
        starts.append(candidates[index].position)
        ends.append(candidates[index].position)
    collide = _collision_matrix(np.array(starts).reshape(-1, 3), np.array(ends).reshape(-1, 3), params.theta_s)
    total += params.c_coll * int(np.triu(collide, 1).sum())
    return total


class _ScoringContext:
    """Precomputed gating, pair costs and slot collisions for one frame.

    Assignments are scored in batches: an ``(N, T)`` array of candidate
    indices (``MISS`` for a miss) gives ``N`` scores. Column ``C`` of the
    ``(T, C + 1)`` tables stands for a miss.
    """

    def __init__(
        self,
        tracks: Sequence[Track],
        candidates: Sequence[Target3D],
        frame: int,
        params: TrackerParams,
    ) -> None:
        self.params = params
        self.n_tracks = n_t = len(tracks)
        self.n_candidates = n_c = len(candidates)
        self.gated = gate_matrix(tracks, candidates, frame, params)
        cand_pos = np.array([c.position for c in candidates], dtype=float).reshape(-1, 3)
        track_pos = np.array([t.state.position for t in tracks], dtype=float).reshape(-1, 3)
        self.distance = np.linalg.norm(cand_pos[None, :, :] - track_pos[:, None, :], axis=-1)

        self.feasible = np.ones((n_t, n_c + 1), dtype=bool)
        self.feasible[:, :n_c] = self.gated
        self.pair_cost = np.full((n_t, n_c + 1), params.c_miss)
        self.pair_cost[:, :n_c] = np.where(self.gated, self.distance, np.inf)

        # One slot per gated pair, then one per candidate birth; the last is idle.
        rows, cols = np.nonzero(self.gated)
        n_match = len(rows)
        self.n_slots = n_match + n_c
        self.slot = np.full((n_t, n_c + 1), self.n_slots, dtype=int)
        self.slot[rows, cols] = np.arange(n_match)
        self.birth_slot = np.arange(n_match, self.n_slots)
        collide = _collision_matrix(
            np.concatenate([track_pos[rows], cand_pos]),
            np.concatenate([cand_pos[cols], cand_pos]),
            params.theta_s,
        )
        self.collide = np.zeros((self.n_slots + 1, self.n_slots + 1))
        self.collide[: self.n_slots, : self.n_slots] = collide
        self.any_collision = bool(collide.any())
        self._track_index = np.arange(n_t)

    def _columns(self, states: np.ndarray) -> np.ndarray:
        return np.where(states == MISS, self.n_candidates, states)

    def _births(self, columns: np.ndarray) -> np.ndarray:
        used = np.zeros((len(columns), self.n_candidates + 1), dtype=bool)
        used[np.arange(len(columns))[:, None], columns] = True
        return ~used[:, : self.n_candidates]

    def score_batch(self, states: np.ndarray) -> np.ndarray:
        columns = self._columns(states)
        births = self._births(columns)
        total = self.pair_cost[self._track_index, columns].sum(axis=1)
        total = total + self.params.c_birth * births.sum(axis=1)
        if self.any_collision:
            active = np.zeros((len(states), self.n_slots + 1))
            active[np.arange(len(states))[:, None], self.slot[self._track_index, columns]] = 1.0
            active[:, self.birth_slot] = births
            active[:, self.n_slots] = 0.0
            pairs = ((active @ self.collide) * active).sum(axis=1) / 2.0
            total = total + self.params.c_coll * pairs
        return total

    def score(self, assignment: Sequence[int]) -> float:
        states = np.asarray(assignment, dtype=int).reshape(1, self.n_tracks)
        return float(self.score_batch(states)[0])

    def hypothesis(self, assignment: Sequence[int], evaluations: int = 0) -> GlobalHypothesis:
        assignment = tuple(int(a) for a in assignment)
        return GlobalHypothesis(
            assignment=assignment,
            births=births_of(assignment, self.n_candidates),
            score=self.score(assignment),
            evaluations=evaluations,
        )

    def neighbour_batch(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Swap, drop-to-miss and merge-birth moves of every state.

        Returns:
            The moved states and the row of ``states`` each came from,
            grouped by that row and in a fixed order within it.
        """
        n_t = self.n_tracks
        columns = self._columns(states)
        blocks, owners = [], []

        # allowed[n, i, j]: track i may take the candidate track j holds.
        allowed = self.feasible[self._track_index[None, :, None], columns[:, None, :]]
        swap = allowed & np.swapaxes(allowed, 1, 2)
        swap &= columns[:, :, None] != columns[:, None, :]
        swap &= np.triu(np.ones((n_t, n_t), dtype=bool), 1)[None]
        owner, first, second = np.nonzero(swap)
        moved = states[owner]
        picks = np.arange(len(owner))
        moved[picks, first] = states[owner, second]
        moved[picks, second] = states[owner, first]
        blocks.append(moved)
        owners.append(owner)

        owner, track = np.nonzero(states != MISS)
        moved = states[owner]
        moved[np.arange(len(owner)), track] = MISS
        blocks.append(moved)
        owners.append(owner)

        births = self._births(columns)
        owner, candidate, track = np.nonzero(births[:, :, None] & self.gated.T[None])
        moved = states[owner]
        moved[np.arange(len(owner)), track] = candidate
        blocks.append(moved)
        owners.append(owner)

        owner = np.concatenate(owners)
        order = np.argsort(owner, kind="stable")
        return np.concatenate(blocks)[order], owner[order]

    def neighbours(self, assignment: Sequence[int]) -> np.ndarray:
        moved, _ = self.neighbour_batch(np.asarray(assignment, dtype=int).reshape(1, self.n_tracks))
        return moved


def _augmented_matrix(ctx: _ScoringContext) -> np.ndarray:
    """Square ``(T + C)`` matrix: tracks and birth rows against candidates and miss columns."""
    n_t, n_c = ctx.n_tracks, ctx.n_candidates
    size = n_t + n_c
    matrix = np.full((size, size), np.inf)
    matrix[:n_t, :n_c] = np.where(ctx.gated, ctx.distance, np.inf)
    matrix[np.arange(n_t), n_c + np.arange(n_t)] = ctx.params.c_miss
    matrix[n_t + np.arange(n_c), np.arange(n_c)] = ctx.params.c_birth
    matrix[n_t:, n_c:] = 0.0
    return matrix


def _solve_constrained(
    base: np.ndarray,
    forced: dict[int, int],
    excluded: frozenset[tuple[int, int]],
) -> tuple[float, tuple[int, ...]] | None:
    matrix = base.copy()
    for row, col in excluded:
        matrix[row, col] = np.inf
    for row, col in forced.items():
        value = matrix[row, col]
        matrix[row, :] = np.inf
        matrix[:, col] = np.inf
        matrix[row, col] = value
    try:
        rows, cols = linear_sum_assignment(matrix)
    except ValueError:
        return None
    total = float(matrix[rows, cols].sum())
    if not np.isfinite(total):
        return None
    return total, tuple(int(c) for c in cols)


def _decode(cols: tuple[int, ...], n_tracks: int, n_candidates: int) -> tuple[int, ...]:
    return tuple(col if col < n_candidates else MISS for col in cols[:n_tracks])


def _murty(ctx: _ScoringContext) -> Iterator[tuple[float, tuple[int, ...]]]:
    """Assignments with their pairwise cost, cheapest first.

    A solution's partition is only solved when the next one is requested.
    """
    n_t, n_c = ctx.n_tracks, ctx.n_candidates
    base = _augmented_matrix(ctx)
    if base.size == 0:
        yield 0.0, ()
        return
    first = _solve_constrained(base, {}, frozenset())
    if first is None:
        return
    counter = itertools.count()
    cost, cols = first
    heap = [(cost, _decode(cols, n_t, n_c), next(counter), cols, {}, frozenset())]
    while heap:
        cost, assignment, _, cols, forced, excluded = heapq.heappop(heap)
        yield cost, assignment
        forced_now = dict(forced)
        for row in range(n_t):
            if row in forced_now:
                continue
            child_excluded = excluded | {(row, cols[row])}
            child = _solve_constrained(base, forced_now, child_excluded)
            if child is not None:
                child_cost, child_cols = child
                heapq.heappush(
                    heap,
                    (
                        child_cost,
                        _decode(child_cols, n_t, n_c),
                        next(counter),
                        child_cols,
                        dict(forced_now),
                        child_excluded,
                    ),
                )
            forced_now[row] = cols[row]


def k_best_assignments(
    tracks: Sequence[Track],
    candidates: Sequence[Target3D],
    params: TrackerParams,
    k: int,
    frame: int,
) -> list[GlobalHypothesis]:
    """The ``k`` cheapest assignments under the pairwise terms, nondecreasing.

    Pairwise cost is matched distance plus miss and birth weights; the
    collision term is left out of the ranking but included in each
    returned hypothesis's ``score``. Ties are broken by the assignment
    tuple itself.
    """
    ctx = _ScoringContext(tracks, candidates, frame, params)
    return [ctx.hypothesis(assignment) for _, assignment in itertools.islice(_murty(ctx), k)]


def associate(
    tracks: Sequence[Track],
    candidates: Sequence[Target3D],
    params: TrackerParams,
    frame: int,
) -> GlobalHypothesis:
    """Minimum pairwise-cost assignment over gated pairs."""
    return k_best_assignments(tracks, candidates, params, 1, frame)[0]


def bls_refine(
    hypothesis: GlobalHypothesis,
    tracks: Sequence[Track],
    candidates: Sequence[Target3D],
    params: TrackerParams,
    frame: int,
    seed: int | Sequence[int] = 0,
) -> GlobalHypothesis:
    """Iterated best-improving local search within ``i_bls_max`` move evaluations.

    Descends with the best of all swap, drop-to-miss and merge-birth moves
    until none improves, then restarts from the best assignment found with
    a random two-move perturbation. The search stops when the evaluation
    budget is spent or ``max_stale_kicks`` perturbations in a row land on
    assignments already evaluated.

    Returns:
        The best assignment found; its score never exceeds the input's.
    """
    if params.i_bls_max == 0:
        return hypothesis
    ctx = _ScoringContext(tracks, candidates, frame, params)
    return _local_search(ctx, hypothesis, frame, seed)


def _local_search(
    ctx: _ScoringContext,
    hypothesis: GlobalHypothesis,
    frame: int,
    seed: int | Sequence[int],
) -> GlobalHypothesis:
    params = ctx.params
    budget = params.i_bls_max
    if budget == 0:
        return hypothesis
    rng = np.random.default_rng(seed)
    current = np.asarray(hypothesis.assignment, dtype=int)
    current_score = ctx.score(current)
    best, best_score = current, current_score
    visited = {hypothesis.assignment}
    evaluations = 0
    stale = 0
    at_optimum = False

    while evaluations < budget:
        if not at_optimum:
            moved = ctx.neighbours(current)[: budget - evaluations]
            evaluations += len(moved)
            visited.update(map(tuple, moved.tolist()))
            if len(moved):
                scores = ctx.score_batch(moved)
                pick = int(np.argmin(scores))
                if scores[pick] < current_score - _IMPROVE_TOL:
                    current, current_score = moved[pick], float(scores[pick])
                    if current_score < best_score - _IMPROVE_TOL:
                        best, best_score = current, current_score
                    continue
            at_optimum = True

        kicked = best
        for _ in range(_KICK_MOVES):
            options = ctx.neighbours(kicked)
            if len(options) == 0:
                break
            kicked = options[int(rng.integers(len(options)))]
        key = tuple(kicked.tolist())
        if key in visited:
            stale += 1
            if stale >= params.max_stale_kicks:
                break
            continue
        stale = 0
        evaluations += 1
        visited.add(key)
        current, current_score = kicked, ctx.score(kicked)
        at_optimum = False
        if current_score < best_score - _IMPROVE_TOL:
            best, best_score = current, current_score

    _LOGGER.debug(
        "Local search at frame %d used %d/%d evaluations (score %.6f -> %.6f)",
        frame, evaluations, budget, hypothesis.score, best_score,
    )
    best_assignment = tuple(best.tolist())
    if best_assignment == hypothesis.assignment:
        return GlobalHypothesis(
            hypothesis.assignment, hypothesis.births, hypothesis.score, evaluations
        )
    return ctx.hypothesis(best_assignment, evaluations)


def extend_tracks(
    tracks: Sequence[Track],
    hypothesis: GlobalHypothesis,
    candidates: Sequence[Target3D],
    frame: int,
    params: TrackerParams,
    next_id: int,
) -> tuple[tuple[Track, ...], int]:
    """Apply one frame's assignment to a track set.

    Matched tracks gain the candidate as a new state, missed tracks
    unseen for more than ``delta_a`` frames are terminated and births
    open tracks numbered from ``next_id`` in candidate order.

    Returns:
        The new track set and the next free track id.
    """
    extended: list[Track] = []
    for track, index in zip(tracks, hypothesis.assignment):
        if index != MISS:
            extended.append(track.extend(candidates[index], frame, params.fps))
        elif frame - track.last_seen <= params.delta_a:
            extended.append(track)
    for order, index in enumerate(hypothesis.births):
        extended.append(Track(id=next_id + order, state=candidates[index], last_seen=frame))
    return tuple(extended), next_id + len(hypothesis.births)


def _live_tracks(tracks: Sequence[Track], frame: int, params: TrackerParams) -> tuple[Track, ...]:
    return tuple(track for track in tracks if frame - track.last_seen <= params.delta_a)


# Frontier entry kinds, see ``hypothesis_step``.
_OPEN, _OPTION, _REFINE, _SCORED = range(4)


def hypothesis_step(
    hypotheses: Sequence[TrackHypothesis],
    candidates: Sequence[Target3D],
    frame: int,
    params: TrackerParams,
    seed: int = 0,
) -> list[TrackHypothesis]:
    """Extend every hypothesis by one frame and keep the best ``k_h``.

    Each parent contributes its ``k_h`` cheapest assignments plus the
    local-search refinement of the cheapest. Children are ranked by
    cumulative score (ties by parent rank, then child order) and children
    with identical resulting track sets are collapsed onto the best one.

    Children are produced lazily from one frontier keyed by a lower bound
    on their score: the parent score, then the parent score plus the
    pairwise cost. Once ``k_h`` distinct children are scored, everything
    left on the frontier is at least as expensive, so parents and
    assignments it still holds are never expanded or refined.
    """
    k_h = params.k_h
    counter = itertools.count()
    frontier = [
        (parent.score, rank, -1, next(counter), _OPEN, None)
        for rank, parent in enumerate(hypotheses)
    ]
    heapq.heapify(frontier)
    expanded: dict[int, tuple[tuple[Track, ...], _ScoringContext, Iterator]] = {}
    ranked: list[tuple[float, int, int, TrackHypothesis]] = []
    seen: set[tuple] = set()
    evaluations = 0

    while frontier and len(seen) < k_h:
        _, rank, order, _, kind, payload = heapq.heappop(frontier)
        parent = hypotheses[rank]
        if kind == _SCORED:
            ranked.append((payload.score, rank, order, payload))
            seen.add(payload.signature())
            continue
        if kind == _OPEN:
            live = _live_tracks(parent.tracks, frame, params)
            ctx = _ScoringContext(live, candidates, frame, params)
            options = _murty(ctx)
            expanded[rank] = (live, ctx, options)
            first = next(options, None)
            if first is None:
                continue
            cost, assignment = first
            heapq.heappush(
                frontier, (parent.score + cost, rank, 0, next(counter), _OPTION, assignment)
            )
            if params.i_bls_max > 0:
                heapq.heappush(
                    frontier, (parent.score + cost, rank, k_h, next(counter), _REFINE, assignment)
                )
            continue

        live, ctx, options = expanded[rank]
        option = ctx.hypothesis(payload)
        if kind == _REFINE:
            option = _local_search(ctx, option, frame, (seed, frame, rank))
            evaluations += option.evaluations
        elif order + 1 < k_h:
            following = next(options, None)
            if following is not None:
                cost, assignment = following
                heapq.heappush(
                    frontier,
                    (parent.score + cost, rank, order + 1, next(counter), _OPTION, assignment),
                )
        tracks, next_id = extend_tracks(live, option, candidates, frame, params, parent.next_id)
        child = TrackHypothesis(
            tracks=tracks, score=parent.score + option.score, next_id=next_id, last=option
        )
        heapq.heappush(frontier, (child.score, rank, order, next(counter), _SCORED, child))

    ranked.sort(key=lambda item: item[:3])
    survivors: list[TrackHypothesis] = []
    kept: set[tuple] = set()
    for _, _, _, child in ranked:
        signature = child.signature()
        if signature in kept:
            continue
        kept.add(signature)
        survivors.append(child)
        if len(survivors) == k_h:
            break
    _LOGGER.debug(
        "Frame %d: %d parents, %d expanded, %d children, %d kept, %d search evaluations",
        frame, len(hypotheses), len(expanded), len(ranked), len(survivors), evaluations,
    )
    return survivors
