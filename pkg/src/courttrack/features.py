"""Pairwise association costs between player detections.

Three ingredients, each scaled to [0, 1] so they can be mixed:

* geometric: distance between box centroids over the frame diagonal
* color: mean RGB difference over 3x3 patches at the shared keypoints
* deep: per-part similarity of convolutional feature vectors sampled on
  the layer's spatial grid around each keypoint's downscaled position

The deep similarity is a softmax over every candidate cell pairing for a
part, so one strongly matching cell pair stands out against the rest.
It is similarity-valued; the matcher consumes ``1 - similarity``.  The
fused cost is an affine blend: ``alpha * geometric + (1 - alpha) *
secondary``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .model import (
    NUM_PARTS,
    BoundingBox,
    Detection,
    FrameMeta,
    PART_PRESETS,
    resolve_part_subset,
    shared_parts,
)

logger = logging.getLogger(__name__)

__all__ = [
    "CROP_SIZE",
    "LAYERS",
    "LayerSpec",
    "PartFeatureSet",
    "CropGeometry",
    "TrackerConfig",
    "CostBreakdown",
    "EmptySharedParts",
    "MissingFeatures",
    "centroid_cost",
    "color_cost",
    "crop_geometry",
    "map_to_grid",
    "dl_similarity",
    "dl_cost",
    "combined_cost",
    "combined_cost_detailed",
    "gather_part_cells",
]

CROP_SIZE = 224  # square crop side every detection is resized to


class EmptySharedParts(ValueError):
    """No part is confidently present in both detections."""


class MissingFeatures(ValueError):
    """A detection lacks the stored features the configuration requires."""


@dataclass(frozen=True)
class LayerSpec:
    """Spatial grid and channel count of one convolutional layer."""

    name: str
    grid_w: int
    grid_h: int
    channels: int


# Output geometry of the supported feature layers for 224x224 input.
LAYERS = {
    "b2c2": LayerSpec("b2c2", 112, 112, 128),
    "b3c2": LayerSpec("b3c2", 56, 56, 256),
    "b4c2": LayerSpec("b4c2", 28, 28, 512),
    "b5c2": LayerSpec("b5c2", 14, 14, 512),
}


@dataclass(frozen=True, eq=False)
class PartFeatureSet:
    """Per-part feature vectors sampled on a layer's spatial grid.

    ``cells`` maps part id -> {(cell_x, cell_y) -> vector}.  Vectors are
    stored L2-normalized; ``channels`` is the vector length, which may be
    smaller than the layer's nominal channel count for synthetic data
    (the grid geometry is what matters to the cost functions).
    """

    layer: LayerSpec
    channels: int
    cells: Mapping[int, Mapping[tuple[int, int], np.ndarray]]

    def __post_init__(self) -> None:
        for part_id, cellmap in self.cells.items():
            if not 0 <= part_id < NUM_PARTS:
                raise ValueError(f"part id {part_id} out of range")
            for (cx, cy), vec in cellmap.items():
                if not (0 <= cx < self.layer.grid_w and 0 <= cy < self.layer.grid_h):
                    raise ValueError(
                        f"cell ({cx},{cy}) outside {self.layer.name} grid"
                    )
                if vec.shape != (self.channels,):
                    raise ValueError(
                        f"part {part_id} cell ({cx},{cy}): expected {self.channels} "
                        f"channels, got {vec.shape}"
                    )
                norm = float(np.linalg.norm(vec))
                if abs(norm - 1.0) > 1e-4:
                    raise ValueError(
                        f"part {part_id} cell ({cx},{cy}): vector norm {norm:.6f} "
                        "is not unit"
                    )


@dataclass(frozen=True)
class CropGeometry:
    """Square crop of side ``side`` centered on a detection's box."""

    center_x: float
    center_y: float
    side: float

    def to_local(self, p: tuple[float, float]) -> tuple[float, float]:
        """Frame coordinates -> crop coordinates, clamped to the crop."""
        half = 0.5 * self.side
        lx = min(max(p[0] - (self.center_x - half), 0.0), self.side)
        ly = min(max(p[1] - (self.center_y - half), 0.0), self.side)
        return (lx, ly)


@dataclass(frozen=True)
class TrackerConfig:
    """Knobs of the cost fusion and the matcher.

    Attributes:
        alpha: Weight of the geometric cost; 1 - alpha goes to the
            secondary (appearance) cost.
        neighborhood: Grid cells gathered around each keypoint, 1, 2, or
            3 (1x1, 2x2, 3x3).
        layer: Feature layer the stored vectors were sampled from.
        conf_threshold: Minimum keypoint confidence for a part to count
            as shared.
        secondary: "deep" for feature similarity, "color" for patches.
        part_subset: Part ids participating in appearance costs.
        cost_gate: Matches costlier than this are rejected to fresh ids;
            1.0 disables the gate (all costs are bounded by 1).
        stabilize: Compute geometric costs in stabilized coordinates.
        similarity_norm: "pairs" normalizes the similarity softmax over
            every candidate cell pair; "per_source" normalizes per source
            cell (experimental, not symmetric).
    """

    alpha: float = 0.5
    neighborhood: int = 2
    layer: LayerSpec = field(default_factory=lambda: LAYERS["b4c2"])
    conf_threshold: float = 0.3
    secondary: str = "deep"
    part_subset: tuple[int, ...] = PART_PRESETS["all"]
    cost_gate: float = 1.0
    stabilize: bool = False
    similarity_norm: str = "pairs"

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        if self.neighborhood not in (1, 2, 3):
            raise ValueError(f"neighborhood must be 1, 2, or 3, got {self.neighborhood}")
        if self.secondary not in ("deep", "color"):
            raise ValueError(f"secondary must be 'deep' or 'color', got {self.secondary!r}")
        if not self.part_subset:
            raise ValueError("part_subset is empty")
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ValueError(f"conf_threshold {self.conf_threshold} outside [0, 1]")
        if self.similarity_norm not in ("pairs", "per_source"):
            raise ValueError(f"unknown similarity_norm {self.similarity_norm!r}")
        if self.cost_gate <= 0.0:
            raise ValueError("cost_gate must be positive")

    @staticmethod
    def from_mapping(raw: Mapping[str, str]) -> "TrackerConfig":
        """Build a config from string key=value pairs (CLI config files)."""
        kwargs: dict = {}
        for key, value in raw.items():
            key = key.strip().lower()
            value = value.strip()
            if key == "alpha":
                kwargs["alpha"] = float(value)
            elif key == "neighborhood":
                kwargs["neighborhood"] = int(value)
            elif key == "layer":
                if value not in LAYERS:
                    raise ValueError(f"unknown layer {value!r}")
                kwargs["layer"] = LAYERS[value]
            elif key == "conf_threshold":
                kwargs["conf_threshold"] = float(value)
            elif key == "secondary":
                kwargs["secondary"] = value
            elif key == "part_subset":
                kwargs["part_subset"] = resolve_part_subset(value)
            elif key == "cost_gate":
                kwargs["cost_gate"] = float(value)
            elif key == "stabilize":
                kwargs["stabilize"] = _parse_bool(value)
            elif key == "similarity_norm":
                kwargs["similarity_norm"] = value
            else:
                raise ValueError(f"unknown config key {key!r}")
        return TrackerConfig(**kwargs)


def _parse_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def centroid_cost(a: BoundingBox, b: BoundingBox, frame: FrameMeta) -> float:
    """Distance between box centroids, normalized by the frame diagonal."""
    ax, ay = a.center
    bx, by = b.center
    return math.hypot(ax - bx, ay - by) / math.hypot(frame.width, frame.height)


# 3x3 pixel offsets around a keypoint, row-major.
_PATCH_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


def _nearest_pixel(v: float) -> int:
    return int(math.floor(v + 0.5))


def extract_patch(img: np.ndarray, x: float, y: float) -> np.ndarray:
    """3x3xC patch centered at the nearest pixel, border-clamped."""
    h, w = img.shape[:2]
    px = _nearest_pixel(x)
    py = _nearest_pixel(y)
    rows = np.clip([py + dy for dy, _ in _PATCH_OFFSETS], 0, h - 1)
    cols = np.clip([px + dx for _, dx in _PATCH_OFFSETS], 0, w - 1)
    return img[rows, cols].astype(np.float64)


def color_cost(
    a: Detection,
    b: Detection,
    img_a: np.ndarray,
    img_b: np.ndarray,
    conf_threshold: float = 0.3,
) -> float:
    """Mean RGB patch difference over the shared parts, in [0, 1].

    For every shared part, 3x3 pixel patches are read around the two
    keypoints (clamped at image borders) and differenced pixelwise with
    the Euclidean norm over RGB.  The sum is normalized by 255, the part
    count, the patch size, and sqrt(3), which bounds the result by 1.

    Raises:
        EmptySharedParts: when no part is confidently present in both.
    """
    s = shared_parts(a, b, conf_threshold)
    if not s:
        raise EmptySharedParts("no shared parts for color cost")
    total = 0.0
    for k in s:
        pa = extract_patch(img_a, a.keypoints[k].x, a.keypoints[k].y)
        pb = extract_patch(img_b, b.keypoints[k].x, b.keypoints[k].y)
        total += float(np.linalg.norm(pa - pb, axis=-1).sum())
    n_offsets = len(_PATCH_OFFSETS)
    return total / (255.0 * len(s) * n_offsets) / math.sqrt(3.0)


def crop_geometry(bbox: BoundingBox) -> CropGeometry:
    """Square crop covering a detection: side equals the box height.

    The square keeps the content's aspect ratio when resized to the
    network's 224x224 input.  A degenerate zero-height box falls back to
    a 1 px side so downstream mapping stays finite.
    """
    side = bbox.height if bbox.height > 0 else 1.0
    cx, cy = bbox.center
    return CropGeometry(center_x=cx, center_y=cy, side=side)


def map_to_grid(
    p: tuple[float, float],
    crop: CropGeometry,
    layer: LayerSpec,
    neighborhood: int,
) -> tuple[tuple[int, int], ...]:
    """Grid cells of a layer covering a keypoint's downscaled position.

    The point is taken to crop coordinates (clamped to the crop), scaled
    to the 224 input and then to the layer grid.  Neighborhood 1 is the
    nearest cell, 2 the floor/ceil square of the fractional position, 3
    the 3x3 block centered on the nearest cell.  Cells are clamped to the
    grid and deduplicated; the result is ordered by (x, y).
    """
    lx, ly = crop.to_local(p)
    fx = lx * layer.grid_w / crop.side
    fy = ly * layer.grid_h / crop.side
    if neighborhood == 1:
        xs = [_nearest_pixel(fx)]
        ys = [_nearest_pixel(fy)]
    elif neighborhood == 2:
        xs = [math.floor(fx), math.ceil(fx)]
        ys = [math.floor(fy), math.ceil(fy)]
    elif neighborhood == 3:
        nx, ny = _nearest_pixel(fx), _nearest_pixel(fy)
        xs = [nx - 1, nx, nx + 1]
        ys = [ny - 1, ny, ny + 1]
    else:
        raise ValueError(f"neighborhood must be 1, 2, or 3, got {neighborhood}")
    cells = {
        (min(max(x, 0), layer.grid_w - 1), min(max(y, 0), layer.grid_h - 1))
        for x in xs
        for y in ys
    }
    return tuple(sorted(cells))


def dl_similarity(
    feats_a: np.ndarray,
    feats_b: np.ndarray,
    norm: str = "pairs",
) -> np.ndarray:
    """Softmax similarity between two stacks of feature vectors.

    Args:
        feats_a: (n_a, C) vectors for the cells around a part in the
            first detection.
        feats_b: (n_b, C) vectors for the second detection.
        norm: "pairs" normalizes over the whole n_a x n_b dot matrix so
            the entries sum to 1; "per_source" normalizes each row.

    Returns:
        (n_a, n_b) similarity matrix.
    """
    dots = np.asarray(feats_a, dtype=np.float64) @ np.asarray(feats_b, dtype=np.float64).T
    shifted = dots - dots.max()
    e = np.exp(shifted)
    if norm == "pairs":
        return e / e.sum()
    if norm == "per_source":
        return e / e.sum(axis=1, keepdims=True)
    raise ValueError(f"unknown similarity norm {norm!r}")


def gather_part_cells(det: Detection, cfg: TrackerConfig) -> dict[int, np.ndarray]:
    """Stack each part's stored cell vectors for the configured neighborhood.

    Returns part id -> (n_cells, C) arrays, restricted to parts that are
    confidently present, inside cfg.part_subset, and covered by the
    detection's feature file.  Cells requested but absent from the file
    are skipped.

    Raises:
        MissingFeatures: when the detection has no feature set, or its
            feature set belongs to a different layer.
    """
    pfs = det.features
    if not isinstance(pfs, PartFeatureSet):
        raise MissingFeatures(
            f"frame {det.frame_id} det {det.det_id} carries no part features"
        )
    if pfs.layer.name != cfg.layer.name:
        raise MissingFeatures(
            f"frame {det.frame_id} det {det.det_id}: features are for layer "
            f"{pfs.layer.name}, config wants {cfg.layer.name}"
        )
    crop = crop_geometry(det.bbox)
    subset = set(cfg.part_subset)
    out: dict[int, np.ndarray] = {}
    for k, kp in enumerate(det.keypoints):
        if k not in subset or not kp.present or kp.conf < cfg.conf_threshold:
            continue
        cellmap = pfs.cells.get(k)
        if not cellmap:
            continue
        cells = map_to_grid((kp.x, kp.y), crop, cfg.layer, cfg.neighborhood)
        vecs = [cellmap[c] for c in cells if c in cellmap]
        if vecs:
            out[k] = np.stack(vecs).astype(np.float64)
    return out


def _dl_cost_from_gathered(
    gathered_a: Mapping[int, np.ndarray],
    gathered_b: Mapping[int, np.ndarray],
    s: tuple[int, ...],
    norm: str,
) -> float:
    contribs = []
    for k in s:
        fa = gathered_a.get(k)
        fb = gathered_b.get(k)
        if fa is None or fb is None:
            continue
        sim = dl_similarity(fa, fb, norm)
        contribs.append(float(sim.max()))
    if not contribs:
        raise MissingFeatures("no shared part has stored feature cells")
    return sum(contribs) / len(contribs)


def dl_cost(a: Detection, b: Detection, cfg: TrackerConfig) -> float:
    """Mean best-cell similarity over the shared parts (a similarity).

    Higher means more alike; the matcher uses ``1 - dl_cost``.  With
    neighborhood 1 every part has a single candidate cell pair, the
    softmax normalizes over that singleton, and the result is identically
    1 regardless of content; such runs carry no appearance signal.

    Parts whose cells are absent from either feature file are dropped
    from the average.

    Raises:
        EmptySharedParts: no confidently shared parts in the subset.
        MissingFeatures: feature sets missing, for the wrong layer, or
            covering none of the shared parts.
    """
    subset = set(cfg.part_subset)
    s = tuple(k for k in shared_parts(a, b, cfg.conf_threshold) if k in subset)
    if not s:
        raise EmptySharedParts("no shared parts for feature cost")
    ga = gather_part_cells(a, cfg)
    gb = gather_part_cells(b, cfg)
    return _dl_cost_from_gathered(ga, gb, s, cfg.similarity_norm)


@dataclass(frozen=True)
class CostBreakdown:
    """Fused cost with its components, for diagnostics and fallbacks."""

    total: float
    geometric: float
    secondary: Optional[float]
    fell_back: bool


def combined_cost_detailed(
    a: Detection,
    b: Detection,
    cfg: TrackerConfig,
    frame: FrameMeta,
    img_a: Optional[np.ndarray] = None,
    img_b: Optional[np.ndarray] = None,
) -> CostBreakdown:
    """Blend of geometric and secondary cost, with fallback bookkeeping.

    When the two detections share no confident part, the secondary cost
    is undefined and the result falls back to the pure geometric cost
    (flagged in the breakdown).  With alpha = 1 the secondary is never
    evaluated.
    """
    cd = centroid_cost(a.bbox, b.bbox, frame)
    if cfg.alpha == 1.0:
        return CostBreakdown(total=cd, geometric=cd, secondary=None, fell_back=False)
    try:
        if cfg.secondary == "deep":
            feat2 = 1.0 - dl_cost(a, b, cfg)
        else:
            if img_a is None or img_b is None:
                raise MissingFeatures("color cost requires both frame images")
            feat2 = color_cost(a, b, img_a, img_b, cfg.conf_threshold)
    except EmptySharedParts:
        return CostBreakdown(total=cd, geometric=cd, secondary=None, fell_back=True)
    total = cfg.alpha * cd + (1.0 - cfg.alpha) * feat2
    return CostBreakdown(total=total, geometric=cd, secondary=feat2, fell_back=False)


def combined_cost(
    a: Detection,
    b: Detection,
    cfg: TrackerConfig,
    frame: FrameMeta,
    img_a: Optional[np.ndarray] = None,
    img_b: Optional[np.ndarray] = None,
) -> float:
    """Fused association cost; see combined_cost_detailed."""
    return combined_cost_detailed(a, b, cfg, frame, img_a, img_b).total
