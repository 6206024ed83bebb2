"""Frame-to-frame assignment of detections to track ids.

Association works on cost matrices (rows: current detections, columns:
remembered tracks).  Each row keeps its two cheapest columns; column
conflicts are settled by a relative-cost rule, then by the margin to the
row's second choice.  The engine keeps a two-frame memory: a track
missed at one frame can still be recovered at the next from its older
detection, after which fresh ids are handed out in detection order.

``brute_force_assignment`` solves the same problem exactly by
enumeration and exists to audit the greedy resolution in tests.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence as Seq

import numpy as np

from .features import (
    MissingFeatures,
    TrackerConfig,
    _dl_cost_from_gathered,
    color_cost,
    gather_part_cells,
)
from .model import Detection, FrameMeta, Sequence
from .stabilization import Homography, stabilize

logger = logging.getLogger(__name__)

__all__ = [
    "AssocEntry",
    "TooLarge",
    "TrackState",
    "TrackResult",
    "build_assoc",
    "resolve_conflicts",
    "brute_force_assignment",
    "match_frame",
    "track_sequence",
]

# A claimant owns a contested column outright when it beats every rival
# by this relative factor.
_DOMINANCE = 0.9

_BRUTE_FORCE_LIMIT = 8


class TooLarge(ValueError):
    """Matrix exceeds the exhaustive-enumeration limit."""


@dataclass(frozen=True)
class AssocEntry:
    """One row's two cheapest columns; second_* is None for 1-wide matrices."""

    row: int
    best_col: int
    best_cost: float
    second_col: Optional[int] = None
    second_cost: Optional[float] = None


def build_assoc(costs: np.ndarray) -> list[AssocEntry]:
    """Per-row best and second-best columns, ties going to the lower index."""
    costs = np.asarray(costs, dtype=np.float64)
    if costs.size == 0:
        return []
    entries = []
    for row in range(costs.shape[0]):
        order = np.argsort(costs[row], kind="stable")
        best = int(order[0])
        if costs.shape[1] > 1:
            second = int(order[1])
            entries.append(
                AssocEntry(row, best, float(costs[row, best]), second, float(costs[row, second]))
            )
        else:
            entries.append(AssocEntry(row, best, float(costs[row, best])))
    return entries


def _margin(entry: AssocEntry) -> float:
    # A row with no alternative loses everything by deviating.
    if entry.second_cost is None:
        return math.inf
    return entry.second_cost - entry.best_cost


def resolve_conflicts(entries: Seq[AssocEntry]) -> dict[int, int]:
    """Settle contested columns; returns row -> column.

    A contested column goes to a claimant that undercuts every rival by
    the dominance factor; failing that, to the claimant with the largest
    margin over its own second choice (ties: cheaper best cost, then
    lower row).  Losers fall back to their second column in row order,
    provided nobody has claimed it.  Rows may end up unassigned.
    """
    by_col: dict[int, list[AssocEntry]] = {}
    for entry in entries:
        by_col.setdefault(entry.best_col, []).append(entry)
    assigned: dict[int, int] = {}
    taken: set[int] = set()
    losers: list[AssocEntry] = []
    for col in sorted(by_col):
        claims = by_col[col]
        if len(claims) == 1:
            assigned[claims[0].row] = col
            taken.add(col)
            continue
        winner = None
        for entry in claims:
            if all(
                entry.best_cost < _DOMINANCE * other.best_cost
                for other in claims
                if other is not entry
            ):
                winner = entry
                break
        if winner is None:
            winner = sorted(claims, key=lambda e: (-_margin(e), e.best_cost, e.row))[0]
        assigned[winner.row] = col
        taken.add(col)
        losers.extend(entry for entry in claims if entry is not winner)
    for entry in sorted(losers, key=lambda e: e.row):
        if entry.second_col is not None and entry.second_col not in taken:
            assigned[entry.row] = entry.second_col
            taken.add(entry.second_col)
    return assigned


def brute_force_assignment(costs: np.ndarray) -> dict[int, int]:
    """Minimum-total assignment of maximum size, by full enumeration.

    Deterministic: among equal-cost optima the lexicographically first
    enumeration wins.  Limited to 8x8.

    Raises:
        TooLarge: either dimension exceeds 8.
    """
    costs = np.asarray(costs, dtype=np.float64)
    rows, cols = costs.shape
    if rows > _BRUTE_FORCE_LIMIT or cols > _BRUTE_FORCE_LIMIT:
        raise TooLarge(f"{rows}x{cols} exceeds {_BRUTE_FORCE_LIMIT}x{_BRUTE_FORCE_LIMIT}")
    if rows == 0 or cols == 0:
        return {}
    best_total = math.inf
    best: Optional[tuple[int, ...]] = None
    if rows <= cols:
        for perm in itertools.permutations(range(cols), rows):
            total = sum(costs[r, perm[r]] for r in range(rows))
            if total < best_total:
                best_total, best = total, perm
        assert best is not None
        return {r: best[r] for r in range(rows)}
    for perm in itertools.permutations(range(rows), cols):
        total = sum(costs[perm[c], c] for c in range(cols))
        if total < best_total:
            best_total, best = total, perm
    assert best is not None
    return {best[c]: c for c in range(cols)}


@dataclass
class TrackState:
    """Mutable id allocator plus per-track last-seen positions."""

    next_id: int = 0
    last_seen: dict[int, int] = field(default_factory=dict)


def match_frame(
    n_dets: int,
    costs_prev1: Optional[np.ndarray],
    labels_prev1: Seq[int],
    costs_prev2: Optional[np.ndarray],
    labels_prev2: Seq[int],
    state: TrackState,
    cost_gate: float = 1.0,
) -> list[int]:
    """Assign a track id to every current detection.

    Both memory banks are resolved independently, giving each detection
    at most one candidate per bank.  Candidates above the cost gate are
    dropped.  The survivors are granted greedily by (cost, bank, row),
    with the fresher bank breaking cost ties; detections left without a
    track receive fresh ids in detection order.
    """
    candidates: list[tuple[float, int, int, int]] = []
    for bank, (costs, labels) in enumerate(
        ((costs_prev1, labels_prev1), (costs_prev2, labels_prev2))
    ):
        if costs is None or costs.size == 0:
            continue
        for row, col in resolve_conflicts(build_assoc(costs)).items():
            cost = float(costs[row, col])
            if cost <= cost_gate:
                candidates.append((cost, bank, row, labels[col]))
    result: list[Optional[int]] = [None] * n_dets
    used: set[int] = set()
    for cost, bank, row, label in sorted(candidates):
        if result[row] is None and label not in used:
            result[row] = label
            used.add(label)
    for row in range(n_dets):
        if result[row] is None:
            result[row] = state.next_id
            state.next_id += 1
    return result  # type: ignore[return-value]


@dataclass(frozen=True)
class _DetData:
    """Precomputed per-detection inputs to the pair cost."""

    det: Detection
    centroid: tuple[float, float]
    parts: frozenset[int]
    gathered: Optional[Mapping[int, np.ndarray]]


@dataclass
class TrackResult:
    """Track labels per frame, parallel to the sequence's detection lists."""

    assignments: dict[int, list[int]]
    n_tracks: int
    fallbacks: int


def _pair_cost(
    a: _DetData,
    b: _DetData,
    frame: FrameMeta,
    cfg: TrackerConfig,
    img_a: Optional[np.ndarray],
    img_b: Optional[np.ndarray],
) -> tuple[float, bool]:
    """Fused cost between two precomputed detections; flags fallbacks."""
    diag = math.hypot(frame.width, frame.height)
    cd = math.hypot(a.centroid[0] - b.centroid[0], a.centroid[1] - b.centroid[1]) / diag
    if cfg.alpha == 1.0:
        return cd, False
    s = tuple(sorted(a.parts & b.parts))
    if not s:
        return cd, True
    if cfg.secondary == "deep":
        feat2 = 1.0 - _dl_cost_from_gathered(a.gathered, b.gathered, s, cfg.similarity_norm)
    else:
        feat2 = color_cost(a.det, b.det, img_a, img_b, cfg.conf_threshold)
    return cfg.alpha * cd + (1.0 - cfg.alpha) * feat2, False


def track_sequence(
    seq: Sequence,
    cfg: TrackerConfig,
    homographies: Optional[Mapping[tuple[int, int], Homography]] = None,
) -> TrackResult:
    """Run the matcher over a whole sequence.

    Geometry can be evaluated in stabilized coordinates (cfg.stabilize
    with frame-pair homographies); appearance always reads the original
    detections, and the output track ids align with the input detection
    lists in original coordinates.

    Raises:
        MissingFeatures: a detection lacks usable stored features while
            the config blends in the deep cost, or frame images are
            missing for the color cost.
        ValueError: stabilization requested without homographies.
    """
    if cfg.alpha == 0.0 and cfg.neighborhood == 1 and cfg.secondary == "deep":
        logger.warning(
            "alpha=0 with neighborhood 1: the similarity softmax normalizes "
            "over a single cell pair and is constantly 1; matching carries "
            "no signal"
        )
    geometry_seq = seq
    if cfg.stabilize:
        if homographies is None:
            raise ValueError("config requests stabilization but no homographies given")
        geometry_seq = stabilize(seq, homographies).stabilized

    need_deep = cfg.alpha < 1.0 and cfg.secondary == "deep"
    need_color = cfg.alpha < 1.0 and cfg.secondary == "color"
    subset = set(cfg.part_subset)
    images: dict[int, np.ndarray] = {}
    if need_color:
        for fm in seq.frames:
            if isinstance(fm.image, np.ndarray):
                images[fm.frame_id] = fm.image
            elif seq.detections.get(fm.frame_id):
                raise MissingFeatures(
                    f"frame {fm.frame_id} has no loaded image; the color cost "
                    "needs pixel data"
                )

    data: list[list[_DetData]] = []
    for fm, sfm in zip(seq.frames, geometry_seq.frames):
        per_frame = []
        for det, sdet in zip(
            seq.detections[fm.frame_id], geometry_seq.detections[sfm.frame_id]
        ):
            gathered = gather_part_cells(det, cfg) if need_deep else None
            parts = frozenset(
                k
                for k in subset
                if det.keypoints[k].present and det.keypoints[k].conf >= cfg.conf_threshold
            )
            per_frame.append(
                _DetData(det=det, centroid=sdet.bbox.center, parts=parts, gathered=gathered)
            )
        data.append(per_frame)

    state = TrackState()
    track_data: dict[int, _DetData] = {}
    assignments: dict[int, list[int]] = {}
    fallbacks = 0
    for pos, fm in enumerate(seq.frames):
        dets = data[pos]
        banks: list[tuple[Optional[np.ndarray], list[int]]] = []
        for age in (1, 2):
            labels = sorted(
                tid for tid, seen in state.last_seen.items() if seen == pos - age
            )
            if dets and labels:
                img_b = images.get(seq.frames[pos - age].frame_id)
                img_a = images.get(fm.frame_id)
                costs = np.empty((len(dets), len(labels)))
                for i, dd in enumerate(dets):
                    for j, tid in enumerate(labels):
                        costs[i, j], fell = _pair_cost(
                            dd, track_data[tid], fm, cfg, img_a, img_b
                        )
                        fallbacks += fell
            else:
                costs = None
            banks.append((costs, labels))
        labels_out = match_frame(
            len(dets), banks[0][0], banks[0][1], banks[1][0], banks[1][1], state, cfg.cost_gate
        )
        for dd, label in zip(dets, labels_out):
            track_data[label] = dd
            state.last_seen[label] = pos
        for tid in [t for t, seen in state.last_seen.items() if seen <= pos - 2]:
            del state.last_seen[tid]
            del track_data[tid]
        assignments[fm.frame_id] = labels_out
    return TrackResult(assignments=assignments, n_tracks=state.next_id, fallbacks=fallbacks)
