"""Parameter sweeps over the tracker's cost-fusion knobs.

A sweep runs the full tracker once per (alpha, neighborhood, layer)
cell against a fixed dataset and scores each run against ground truth.
Cells are independent, so they fan out over a thread pool; the output
order is the cartesian-product order regardless of scheduling.  Cells
whose configuration cannot run on the data (typically: feature files
belong to a different layer) are reported with an error note instead of
failing the sweep; alpha = 1 never touches features and runs anywhere.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence as Seq

from .features import LAYERS, MissingFeatures, TrackerConfig
from .matcher import track_sequence
from .metrics import EmptyGroundTruth, MotSummary, NoCorrespondences, evaluate
from .model import BoundingBox, Sequence
from .stabilization import Homography

__all__ = ["AblationCell", "run_ablation", "format_table", "cells_to_json"]


@dataclass(frozen=True)
class AblationCell:
    """One sweep cell: its configuration and the resulting scores."""

    alpha: float
    neighborhood: int
    layer: str
    stabilize: bool
    summary: Optional[MotSummary]
    error: Optional[str] = None


def _run_cell(
    seq: Sequence,
    gt: Mapping[int, list[tuple[int, BoundingBox]]],
    homographies: Optional[Mapping[tuple[int, int], Homography]],
    cfg: TrackerConfig,
    gate: float,
) -> tuple[Optional[MotSummary], Optional[str]]:
    try:
        result = track_sequence(seq, cfg, homographies)
        hyp: dict[int, list[tuple[int, BoundingBox]]] = {}
        for frame_id, labels in result.assignments.items():
            dets = seq.detections[frame_id]
            hyp[frame_id] = [
                (label, det.bbox) for det, label in zip(dets, labels)
            ]
        return evaluate(gt, hyp, gate), None
    except (MissingFeatures, EmptyGroundTruth, NoCorrespondences, ValueError) as exc:
        return None, str(exc)


def run_ablation(
    seq: Sequence,
    gt: Mapping[int, list[tuple[int, BoundingBox]]],
    homographies: Optional[Mapping[tuple[int, int], Homography]] = None,
    alphas: Seq[float] = (),
    neighborhoods: Seq[int] = (1, 2, 3),
    layers: Seq[str] = ("b4c2",),
    stabilize: bool = False,
    secondary: str = "deep",
    gate: float = 0.5,
    threads: int = 1,
) -> list[AblationCell]:
    """Score every (alpha, neighborhood, layer) combination.

    The result list follows the cartesian-product order of the inputs.
    """
    grid = [
        (alpha, n, layer)
        for alpha in alphas
        for n in neighborhoods
        for layer in layers
    ]
    configs = [
        TrackerConfig(
            alpha=alpha,
            neighborhood=n,
            layer=LAYERS[layer],
            stabilize=stabilize,
            secondary=secondary,
        )
        for alpha, n, layer in grid
    ]
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        outcomes = list(
            pool.map(lambda cfg: _run_cell(seq, gt, homographies, cfg, gate), configs)
        )
    return [
        AblationCell(
            alpha=alpha,
            neighborhood=n,
            layer=layer,
            stabilize=stabilize,
            summary=summary,
            error=error,
        )
        for (alpha, n, layer), (summary, error) in zip(grid, outcomes)
    ]


def best_cell(cells: Seq[AblationCell]) -> Optional[AblationCell]:
    """Highest MOTA (MOTP breaks ties, then grid order) among runnable cells."""
    scored = [c for c in cells if c.summary is not None]
    if not scored:
        return None
    return max(
        enumerate(scored),
        key=lambda item: (item[1].summary.mota, item[1].summary.motp, -item[0]),
    )[1]


def format_table(cells: Seq[AblationCell]) -> str:
    """Aligned text table, the best cell marked with an asterisk."""
    best = best_cell(cells)
    header = f"{'':2}{'alpha':>6} {'nbhd':>5} {'layer':>6} {'stab':>5} {'mota':>8} {'motp':>8} {'mm':>5} {'fp':>5} {'miss':>6}"
    lines = [header]
    for cell in cells:
        mark = "* " if cell is best else "  "
        stab = "on" if cell.stabilize else "off"
        if cell.summary is None:
            lines.append(
                f"{mark}{cell.alpha:>6.2f} {cell.neighborhood:>5d} {cell.layer:>6} "
                f"{stab:>5} {'-':>8} {'-':>8} {'-':>5} {'-':>5} {'-':>6}  ({cell.error})"
            )
            continue
        s = cell.summary
        lines.append(
            f"{mark}{cell.alpha:>6.2f} {cell.neighborhood:>5d} {cell.layer:>6} "
            f"{stab:>5} {s.mota:>8.4f} {s.motp:>8.4f} {s.mismatches:>5d} "
            f"{s.fp:>5d} {s.misses:>6d}"
        )
    return "\n".join(lines)


def cells_to_json(cells: Seq[AblationCell]) -> dict:
    """JSON-ready representation of a sweep, best cell included."""
    best = best_cell(cells)
    rows = []
    for cell in cells:
        row: dict = {
            "alpha": cell.alpha,
            "neighborhood": cell.neighborhood,
            "layer": cell.layer,
            "stabilize": cell.stabilize,
        }
        if cell.summary is None:
            row["error"] = cell.error
        else:
            s = cell.summary
            row.update(
                mota=s.mota,
                motp=s.motp,
                mismatches=s.mismatches,
                fp=s.fp,
                misses=s.misses,
                gt_count=s.gt_count,
            )
        rows.append(row)
    out = {"cells": rows}
    if best is not None:
        out["best"] = {
            "alpha": best.alpha,
            "neighborhood": best.neighborhood,
            "layer": best.layer,
            "stabilize": best.stabilize,
            "mota": best.summary.mota,
            "motp": best.summary.motp,
        }
    return out
