"""Multi-object tracking metrics (MOTA / MOTP) and detection P/R/F1.

Correspondence follows the classic accumulator protocol: pairs from the
previous frame are carried over while they still overlap, remaining
boxes are matched by minimum total (1 - IoU) under a gate, and an id
switch relative to the carried map counts as a mismatch.  The map is
kept injective in both directions.

MOTA = 1 - (fp + misses + mismatches) / gt_count; it is unbounded below.
MOTP here is the mean IoU of matched pairs (higher is better).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping

from .model import BoundingBox

__all__ = [
    "DuplicateId",
    "EmptyGroundTruth",
    "NoCorrespondences",
    "MetricsAccumulator",
    "MotSummary",
    "PrfSummary",
    "iou",
    "evaluate",
    "detection_prf",
]

# Gated-out pairs get this cost in the exhaustive matcher; any real
# total is far below it, so cardinality is maximized first.
_BIG = 1e6

_EXHAUSTIVE_LIMIT = 8

FramePairs = Mapping[int, list[tuple[int, BoundingBox]]]


class EmptyGroundTruth(ValueError):
    """MOTA is undefined without a single ground-truth box."""


class NoCorrespondences(ValueError):
    """MOTP is undefined when no pair was ever matched."""


class DuplicateId(ValueError):
    """An object id appears twice in one frame."""


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when both are degenerate."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _match_gated(
    gt_boxes: list[BoundingBox],
    hyp_boxes: list[BoundingBox],
    gate: float,
) -> list[tuple[int, int, float]]:
    """One-to-one matching maximizing pairs, then total IoU, under a gate.

    Returns (gt_index, hyp_index, iou) triples.  Small problems are
    solved exactly by enumeration (first optimum in lexicographic order
    wins ties); larger ones greedily, best overlap first.
    """
    n_g, n_h = len(gt_boxes), len(hyp_boxes)
    if n_g == 0 or n_h == 0:
        return []
    overlaps = [[iou(g, h) for h in hyp_boxes] for g in gt_boxes]
    if max(n_g, n_h) <= _EXHAUSTIVE_LIMIT:
        n = max(n_g, n_h)
        cost = [[_BIG] * n for _ in range(n)]
        for gi in range(n_g):
            for hi in range(n_h):
                if overlaps[gi][hi] >= gate:
                    cost[gi][hi] = 1.0 - overlaps[gi][hi]
        best_total = math.inf
        best_perm = None
        for perm in itertools.permutations(range(n)):
            total = sum(cost[i][perm[i]] for i in range(n))
            if total < best_total:
                best_total, best_perm = total, perm
        assert best_perm is not None
        return [
            (gi, best_perm[gi], overlaps[gi][best_perm[gi]])
            for gi in range(n_g)
            if best_perm[gi] < n_h and cost[gi][best_perm[gi]] < _BIG
        ]
    candidates = sorted(
        (1.0 - overlaps[gi][hi], gi, hi)
        for gi in range(n_g)
        for hi in range(n_h)
        if overlaps[gi][hi] >= gate
    )
    used_g: set[int] = set()
    used_h: set[int] = set()
    pairs = []
    for cost_value, gi, hi in candidates:
        if gi not in used_g and hi not in used_h:
            used_g.add(gi)
            used_h.add(hi)
            pairs.append((gi, hi, overlaps[gi][hi]))
    return pairs


def _check_unique(items: list[tuple[int, BoundingBox]], what: str, frame_id: int) -> None:
    seen: set[int] = set()
    for obj_id, _ in items:
        if obj_id in seen:
            raise DuplicateId(f"{what} id {obj_id} repeated in frame {frame_id}")
        seen.add(obj_id)


class MetricsAccumulator:
    """Streaming CLEAR-style accumulator over frames in temporal order."""

    def __init__(self, gate: float = 0.5) -> None:
        self.gate = gate
        self.fp = 0
        self.misses = 0
        self.mismatches = 0
        self.gt_count = 0
        self.matched_count = 0
        self.iou_sum = 0.0
        self._map: dict[int, int] = {}

    def update(
        self,
        gt: list[tuple[int, BoundingBox]],
        hyp: list[tuple[int, BoundingBox]],
        frame_id: int = -1,
    ) -> None:
        """Fold one frame of (id, box) pairs into the tallies."""
        _check_unique(gt, "ground-truth", frame_id)
        _check_unique(hyp, "hypothesis", frame_id)
        hyp_by_id = {hid: box for hid, box in hyp}
        matched: list[tuple[int, int, float]] = []  # (gt_id, hyp_id, iou)
        rest_gt: list[tuple[int, BoundingBox]] = []
        used_hyp: set[int] = set()
        for gt_id, gt_box in sorted(gt, key=lambda item: item[0]):
            carried = self._map.get(gt_id)
            if carried is not None and carried in hyp_by_id:
                overlap = iou(gt_box, hyp_by_id[carried])
                if overlap >= self.gate:
                    matched.append((gt_id, carried, overlap))
                    used_hyp.add(carried)
                    continue
            rest_gt.append((gt_id, gt_box))
        rest_hyp = [(hid, box) for hid, box in hyp if hid not in used_hyp]
        fresh = _match_gated(
            [box for _, box in rest_gt], [box for _, box in rest_hyp], self.gate
        )
        # Mismatch decisions compare against the map as it stood when the
        # frame began, so both halves of an id swap are counted.
        before = dict(self._map)
        for gi, hi, overlap in fresh:
            gt_id = rest_gt[gi][0]
            hyp_id = rest_hyp[hi][0]
            previous = before.get(gt_id)
            if previous is not None and previous != hyp_id:
                self.mismatches += 1
            self._map[gt_id] = hyp_id
            # Keep the map injective: nobody else may point at this track.
            for other in [g for g, h in self._map.items() if h == hyp_id and g != gt_id]:
                del self._map[other]
            matched.append((gt_id, hyp_id, overlap))
        self.matched_count += len(matched)
        self.iou_sum += sum(overlap for _, _, overlap in matched)
        self.fp += len(hyp) - len(matched)
        self.misses += len(gt) - len(matched)
        self.gt_count += len(gt)

    def mota(self) -> float:
        if self.gt_count == 0:
            raise EmptyGroundTruth("no ground-truth boxes accumulated")
        return 1.0 - (self.fp + self.misses + self.mismatches) / self.gt_count

    def motp(self) -> float:
        if self.matched_count == 0:
            raise NoCorrespondences("no matched pairs accumulated")
        return self.iou_sum / self.matched_count


@dataclass(frozen=True)
class MotSummary:
    mota: float
    motp: float
    fp: int
    misses: int
    mismatches: int
    gt_count: int
    matched_count: int


@dataclass(frozen=True)
class PrfSummary:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def _frame_union(gt: FramePairs, hyp: FramePairs) -> list[int]:
    return sorted(set(gt) | set(hyp))


def evaluate(gt: FramePairs, hyp: FramePairs, gate: float = 0.5) -> MotSummary:
    """Accumulate both streams over the union of their frames."""
    acc = MetricsAccumulator(gate=gate)
    for frame_id in _frame_union(gt, hyp):
        acc.update(gt.get(frame_id, []), hyp.get(frame_id, []), frame_id)
    return MotSummary(
        mota=acc.mota(),
        motp=acc.motp(),
        fp=acc.fp,
        misses=acc.misses,
        mismatches=acc.mismatches,
        gt_count=acc.gt_count,
        matched_count=acc.matched_count,
    )


def detection_prf(gt: FramePairs, hyp: FramePairs, gate: float = 0.5) -> PrfSummary:
    """Detection-level precision/recall/F1, matching each frame afresh.

    Identities are ignored; every frame is matched independently with
    the same gated one-to-one matching the accumulator uses.  Empty
    denominators yield 0.
    """
    tp = fp = fn = 0
    for frame_id in _frame_union(gt, hyp):
        gt_items = gt.get(frame_id, [])
        hyp_items = hyp.get(frame_id, [])
        _check_unique(gt_items, "ground-truth", frame_id)
        _check_unique(hyp_items, "hypothesis", frame_id)
        pairs = _match_gated(
            [box for _, box in gt_items], [box for _, box in hyp_items], gate
        )
        tp += len(pairs)
        fp += len(hyp_items) - len(pairs)
        fn += len(gt_items) - len(pairs)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PrfSummary(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)
