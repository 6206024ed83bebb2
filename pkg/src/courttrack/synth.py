"""Synthetic sequences with known ground truth.

Players are rigid 25-part skeletons scaled by a per-player height and
moved by one of three motion models: ``static`` (nothing moves),
``walk`` (independent Gaussian steps), and ``crossing`` (pairs shuttle
past each other so a purely geometric matcher swaps their ids).  A
camera pan shifts everything horizontally and is reported as exact
frame-to-frame homographies.

Every detection gets a feature file: each (player, part, cell) triple
owns a fixed random unit vector, optionally perturbed per frame.  Cells
are stable across frames because the skeleton is rigid and crops are
centered on the box, so the same player aligns with itself cell by cell
while different players are near orthogonal.

All randomness flows from named ``default_rng`` streams keyed by the
seed plus integer tags, and records are written in sorted order, so a
given config always produces byte-identical files.  Ground truth keeps
every player's box in every frame; dropouts remove detections only.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .features import LAYERS, PartFeatureSet, crop_geometry, map_to_grid
from .featfile import write_features
from .model import (
    NUM_PARTS,
    BoundingBox,
    Detection,
    FrameMeta,
    Keypoint,
    Sequence,
    derive_bbox,
)
from .seqio import save_homographies, save_sequence, save_tracks
from .stabilization import Homography

__all__ = ["SynthConfig", "BuiltSequence", "build_sequence", "generate"]

# Skeleton template: (x offset, y) per part in units of player height,
# anchored at the top center.  Slightly asymmetric on purpose so no
# part lands exactly on a feature-grid cell boundary.
_TEMPLATE = (
    (0.000, 0.060),  # nose
    (0.000, 0.180),  # chest
    (-0.110, 0.190),  # r_shoulder
    (-0.160, 0.330),  # r_elbow
    (-0.185, 0.460),  # r_wrist
    (0.110, 0.190),  # l_shoulder
    (0.160, 0.330),  # l_elbow
    (0.180, 0.460),  # l_wrist
    (0.000, 0.520),  # mid_hip
    (-0.070, 0.520),  # r_hip
    (-0.075, 0.740),  # r_knee
    (-0.080, 0.950),  # r_ankle
    (0.070, 0.520),  # l_hip
    (0.075, 0.740),  # l_knee
    (0.080, 0.950),  # l_ankle
    (-0.020, 0.045),  # r_eye
    (0.020, 0.045),  # l_eye
    (-0.045, 0.055),  # r_ear
    (0.045, 0.055),  # l_ear
    (0.095, 1.000),  # l_toes
    (0.070, 0.980),  # l_heel
    (0.082, 0.990),  # l_mid_foot
    (-0.095, 1.000),  # r_toes
    (-0.070, 0.980),  # r_heel
    (-0.082, 0.990),  # r_mid_foot
)

_PALETTE = (
    (220, 30, 30),
    (30, 60, 220),
    (240, 240, 240),
    (20, 20, 20),
    (240, 200, 40),
    (40, 200, 220),
    (140, 40, 200),
    (250, 140, 20),
    (40, 180, 60),
    (250, 100, 180),
)

_FLOOR_COLOR = (193, 154, 107)

# Tags separating the independent random streams.
_TAG_LAYOUT = 1
_TAG_SIGNATURE = 2
_TAG_WALK = 3
_TAG_CONF = 4
_TAG_DROPOUT = 5
_TAG_ORDER = 6
_TAG_NOISE = 7


@dataclass(frozen=True)
class SynthConfig:
    """Everything the generator needs; equal configs mean equal bytes."""

    seed: int = 0
    n_players: int = 10
    n_frames: int = 40
    width: int = 1920
    height: int = 1080
    motion: str = "walk"  # static | walk | crossing
    placement: str = "grid"  # grid | line
    walk_sigma: float = 3.0
    swap_period: int = 3
    cross_offset: float = 6.0
    cross_distance: float = 300.0
    dropout_prob: float = 0.0
    pan_per_frame: float = 0.0
    feat_dim: int = 64
    feat_noise: float = 0.0
    layer: str = "b4c2"
    conf_range: tuple[float, float] = (0.6, 1.0)
    height_range: tuple[float, float] = (260.0, 380.0)
    line_spacing: float = 10.0
    line_origin: tuple[float, float] = (700.0, 400.0)
    write_images: bool = False
    jersey_colors: tuple[tuple[int, int, int], ...] = _PALETTE

    def __post_init__(self) -> None:
        if self.motion not in ("static", "walk", "crossing"):
            raise ValueError(f"unknown motion {self.motion!r}")
        if self.placement not in ("grid", "line"):
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.layer not in LAYERS:
            raise ValueError(f"unknown layer {self.layer!r}")
        if self.n_players < 1 or self.n_frames < 1:
            raise ValueError("need at least one player and one frame")
        if self.feat_dim < 1:
            raise ValueError("feat_dim must be positive")
        if self.swap_period < 1:
            raise ValueError("swap_period must be positive")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must be in [0, 1)")
        lo, hi = self.conf_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("conf_range must be ordered inside [0, 1]")
        if not 0.0 < self.height_range[0] <= self.height_range[1]:
            raise ValueError("height_range must be ordered and positive")


def _rng(cfg: SynthConfig, *tags: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, *tags])


def _anchors(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Starting top-center positions, one row per player."""
    n = cfg.n_players
    if cfg.motion == "crossing":
        n_pairs = n // 2
        out = np.zeros((n, 2))
        for j in range(n_pairs):
            if n_pairs > 1:
                y = 0.1 * cfg.height + j * (0.4 * cfg.height / (n_pairs - 1))
            else:
                y = 0.25 * cfg.height
            x = 0.2 * cfg.width
            out[2 * j] = (x, y + cfg.cross_offset)
            out[2 * j + 1] = (x + cfg.cross_distance, y - cfg.cross_offset)
        if n % 2:
            out[n - 1] = (0.8 * cfg.width, 0.3 * cfg.height)
        return out
    if cfg.placement == "line":
        x0, y0 = cfg.line_origin
        return np.array([(x0 + i * cfg.line_spacing, y0) for i in range(n)])
    n_rows = 1 if n <= 5 else 2
    n_cols = math.ceil(n / n_rows)
    margin = 0.12 * cfg.width
    span = cfg.width - 2.0 * margin
    row_ys = [0.30 * cfg.height] if n_rows == 1 else [0.18 * cfg.height, 0.52 * cfg.height]
    jitter = rng.uniform(-15.0, 15.0, size=(n, 2))
    out = np.zeros((n, 2))
    for i in range(n):
        row, col = divmod(i, n_cols)
        out[i] = (margin + (col + 0.5) * span / n_cols, row_ys[row])
    return out + jitter


def _positions(cfg: SynthConfig, anchors: np.ndarray) -> np.ndarray:
    """World top-center positions, shape (n_frames, n_players, 2)."""
    n, t_total = cfg.n_players, cfg.n_frames
    pos = np.zeros((t_total, n, 2))
    if cfg.motion == "walk":
        for p in range(n):
            steps = _rng(cfg, _TAG_WALK, p).normal(0.0, cfg.walk_sigma, size=(t_total - 1, 2))
            pos[0, p] = anchors[p]
            pos[1:, p] = anchors[p] + np.cumsum(steps, axis=0)
        return pos
    if cfg.motion == "crossing":
        period = 2 * cfg.swap_period
        for t in range(t_total):
            phase = (t % period) / cfg.swap_period
            u = 1.0 - abs(phase - 1.0)
            for j in range(cfg.n_players // 2):
                a, b = 2 * j, 2 * j + 1
                pos[t, a] = anchors[a] + (u * cfg.cross_distance, 0.0)
                pos[t, b] = anchors[b] - (u * cfg.cross_distance, 0.0)
            if cfg.n_players % 2:
                pos[t, -1] = anchors[-1]
        return pos
    pos[:] = anchors[None, :, :]
    return pos


def _keypoints(top_center: np.ndarray, height: float, confs: np.ndarray) -> tuple[Keypoint, ...]:
    x0, y0 = top_center
    return tuple(
        Keypoint(
            x=float(x0 + dx * height),
            y=float(y0 + fy * height),
            conf=float(confs[k]),
        )
        for k, (dx, fy) in enumerate(_TEMPLATE)
    )


def _union_cells(kps, layer) -> dict[int, tuple[tuple[int, int], ...]]:
    """Cells any neighborhood setting may request, per part."""
    crop = crop_geometry(derive_bbox(kps))
    out = {}
    for k, kp in enumerate(kps):
        cells: set[tuple[int, int]] = set()
        for n in (1, 2, 3):
            cells.update(map_to_grid((kp.x, kp.y), crop, layer, n))
        out[k] = tuple(sorted(cells))
    return out


def _signatures(
    cfg: SynthConfig, cells: dict[int, tuple[tuple[int, int], ...]], player: int
) -> dict[int, dict[tuple[int, int], np.ndarray]]:
    rng = _rng(cfg, _TAG_SIGNATURE, player)
    out: dict[int, dict[tuple[int, int], np.ndarray]] = {}
    for k in range(NUM_PARTS):
        per_cell = {}
        for cell in cells[k]:
            vec = rng.standard_normal(cfg.feat_dim)
            per_cell[cell] = vec / np.linalg.norm(vec)
        out[k] = per_cell
    return out


def _dropout_table(cfg: SynthConfig) -> np.ndarray:
    """Boolean (frame, player) table; a player never drops twice in a row."""
    rng = _rng(cfg, _TAG_DROPOUT)
    dropped = np.zeros((cfg.n_frames, cfg.n_players), dtype=bool)
    for t in range(cfg.n_frames):
        for p in range(cfg.n_players):
            r = rng.uniform()
            if cfg.dropout_prob > 0.0 and r < cfg.dropout_prob:
                if t == 0 or not dropped[t - 1, p]:
                    dropped[t, p] = True
    return dropped


@dataclass
class BuiltSequence:
    """In-memory result of a generation run, before any file is written."""

    seq: Sequence
    gt: dict[int, list[tuple[int, BoundingBox]]]
    homographies: dict[tuple[int, int], Homography]
    dropouts: list[tuple[int, int]]
    heights: list[float]
    det_players: dict[int, list[int]]  # frame -> player id per detection
    max_cross_dot: Optional[float]


def build_sequence(cfg: SynthConfig) -> BuiltSequence:
    """Generate the whole sequence in memory, features attached."""
    layer = LAYERS[cfg.layer]
    layout_rng = _rng(cfg, _TAG_LAYOUT)
    heights = layout_rng.uniform(*cfg.height_range, size=cfg.n_players)
    anchors = _anchors(cfg, layout_rng)
    pos = _positions(cfg, anchors)
    dropped = _dropout_table(cfg)
    conf_rng = _rng(cfg, _TAG_CONF)
    order_rng = _rng(cfg, _TAG_ORDER)

    # Per-player cell layout and signature vectors.  Crops are centered
    # on the box, so cell positions depend only on the template and the
    # height, never on where the player stands.
    cell_sets = []
    signatures = []
    for p in range(cfg.n_players):
        frame0 = _keypoints(pos[0, p], heights[p], np.ones(NUM_PARTS))
        cells = _union_cells(frame0, layer)
        cell_sets.append(cells)
        signatures.append(_signatures(cfg, cells, p))

    frames = []
    detections: dict[int, list[Detection]] = {}
    gt: dict[int, list] = {}
    det_players: dict[int, list[int]] = {}
    dropouts: list[tuple[int, int]] = []
    for t in range(cfg.n_frames):
        frames.append(FrameMeta(frame_id=t, width=cfg.width, height=cfg.height))
        gt_rows = []
        present: list[tuple[int, tuple[Keypoint, ...]]] = []
        for p in range(cfg.n_players):
            confs = conf_rng.uniform(*cfg.conf_range, size=NUM_PARTS)
            frame_pos = pos[t, p] - (cfg.pan_per_frame * t, 0.0)
            kps = _keypoints(frame_pos, heights[p], confs)
            gt_rows.append((p, derive_bbox(kps)))
            if dropped[t, p]:
                dropouts.append((t, p))
            else:
                present.append((p, kps))
        gt[t] = gt_rows
        perm = order_rng.permutation(len(present))
        dets = []
        players = []
        for det_id, src in enumerate(perm):
            p, kps = present[src]
            if cfg.feat_noise > 0.0:
                noise_rng = _rng(cfg, _TAG_NOISE, t, p)
                cells = {}
                for k in range(NUM_PARTS):
                    per_cell = {}
                    for cell in cell_sets[p][k]:
                        vec = signatures[p][k][cell] + cfg.feat_noise * noise_rng.standard_normal(
                            cfg.feat_dim
                        )
                        per_cell[cell] = vec / np.linalg.norm(vec)
                    cells[k] = per_cell
            else:
                cells = signatures[p]
            pfs = PartFeatureSet(layer=layer, channels=cfg.feat_dim, cells=cells)
            dets.append(
                Detection(
                    frame_id=t,
                    det_id=det_id,
                    keypoints=kps,
                    feat_ref=f"{t:04d}_{det_id:02d}.pfv",
                    features=pfs,
                )
            )
            players.append(p)
        detections[t] = dets
        det_players[t] = players

    homographies: dict[tuple[int, int], Homography] = {}
    if cfg.pan_per_frame != 0.0:
        shift = Homography.translation(-cfg.pan_per_frame, 0.0)
        for t in range(cfg.n_frames - 1):
            homographies[(t, t + 1)] = shift

    max_dot = None
    if cfg.n_players >= 2:
        stacks = []
        for p in range(cfg.n_players):
            vecs = [
                signatures[p][k][cell]
                for k in range(NUM_PARTS)
                for cell in cell_sets[p][k]
            ]
            stacks.append(np.stack(vecs))
        best = -np.inf
        for p in range(cfg.n_players):
            for q in range(p + 1, cfg.n_players):
                best = max(best, float((stacks[p] @ stacks[q].T).max()))
        max_dot = best

    return BuiltSequence(
        seq=Sequence(frames=frames, detections=detections),
        gt=gt,
        homographies=homographies,
        dropouts=dropouts,
        heights=[float(h) for h in heights],
        det_players=det_players,
        max_cross_dot=max_dot,
    )


def _write_images(cfg: SynthConfig, built: BuiltSequence, out_dir: Path) -> None:
    import cv2

    img_dir = out_dir / "images"
    img_dir.mkdir(exist_ok=True)
    palette = cfg.jersey_colors
    for t, rows in built.gt.items():
        img = np.full((cfg.height, cfg.width, 3), _FLOOR_COLOR, dtype=np.uint8)
        present_players = set(built.det_players[t])
        for p, box in rows:
            if p not in present_players:
                continue
            x0 = max(int(math.floor(box.x_min)), 0)
            y0 = max(int(math.floor(box.y_min)), 0)
            x1 = min(int(math.ceil(box.x_max)), cfg.width)
            y1 = min(int(math.ceil(box.y_max)), cfg.height)
            if x0 < x1 and y0 < y1:
                img[y0:y1, x0:x1] = palette[p % len(palette)]
        cv2.imwrite(str(img_dir / f"{t:04d}.png"), img[..., ::-1])


def generate(cfg: SynthConfig, out_dir: str | Path) -> dict:
    """Write a full dataset and return its manifest.

    Files: detections.jsonl, frames.jsonl, gt.csv, features/*.pfv (one
    per detection), homographies.jsonl when panning, meta.json, and
    optionally images/.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    built = build_sequence(cfg)

    save_sequence(built.seq, out_dir / "detections.jsonl", out_dir / "frames.jsonl")
    gt_rows = [
        (t, p, box) for t in sorted(built.gt) for p, box in built.gt[t]
    ]
    save_tracks(out_dir / "gt.csv", gt_rows)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(exist_ok=True)
    for t in sorted(built.seq.detections):
        for det in built.seq.detections[t]:
            write_features(feat_dir / det.feat_ref, det.features)
    if built.homographies:
        save_homographies(
            out_dir / "homographies.jsonl",
            [(a, b, h) for (a, b), h in sorted(built.homographies.items())],
        )
    if cfg.write_images:
        _write_images(cfg, built, out_dir)

    meta = {
        "config": _config_dict(cfg),
        "dropouts": [[int(t), int(p)] for t, p in built.dropouts],
        "heights": built.heights,
        "max_cross_signature_dot": built.max_cross_dot,
        "n_detections": sum(len(d) for d in built.seq.detections.values()),
    }
    with open(out_dir / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta


def _config_dict(cfg: SynthConfig) -> dict:
    raw = asdict(cfg)
    raw["conf_range"] = list(cfg.conf_range)
    raw["height_range"] = list(cfg.height_range)
    raw["line_origin"] = list(cfg.line_origin)
    raw["jersey_colors"] = [list(c) for c in cfg.jersey_colors]
    return raw
