"""Crop geometry and activation-grid cell selection.

The tracker that consumes our output recomputes nothing: it compares the
feature vectors stored in .pfv files by their (part, cell) keys.  Two
exports only match up if the mapping from image point to grid cell is
bit-for-bit the same function, so the arithmetic below is part of the
wire contract and must not drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import cv2
import numpy as np

__all__ = [
    "CROP_SIZE",
    "LAYER_GRIDS",
    "CropBox",
    "person_crop",
    "cells_for_point",
    "extract_crop",
]

# layer name -> spatial grid of the activation map for a CROP_SIZE input
LAYER_GRIDS = {
    "b2c2": 112,
    "b3c2": 56,
    "b4c2": 28,
    "b5c2": 14,
}

CROP_SIZE = 224

INTERPOLATIONS = {
    "nearest": cv2.INTER_NEAREST,
    "bilinear": cv2.INTER_LINEAR,
    "bicubic": cv2.INTER_CUBIC,
}


@dataclass(frozen=True)
class CropBox:
    """Square crop in source-image coordinates: center plus side length."""

    cx: float
    cy: float
    side: float


def person_crop(keypoints: np.ndarray) -> Optional[CropBox]:
    """Square crop around one person from a (25, 3) keypoint array.

    Rows holding NaN mark absent parts.  The box is the tight bound over
    every present part, confidence ignored; the crop side equals the box
    height so limb spread does not change the scale.  Returns None when
    no part is present.
    """
    present = np.isfinite(keypoints[:, 0]) & np.isfinite(keypoints[:, 1])
    if not present.any():
        return None
    xs = keypoints[present, 0]
    ys = keypoints[present, 1]
    side = float(ys.max() - ys.min())
    if side <= 0.0:
        side = 1.0  # degenerate pose, keep the mapping well defined
    cx = float(xs.min() + xs.max()) / 2.0
    cy = float(ys.min() + ys.max()) / 2.0
    return CropBox(cx, cy, side)


def _nearest(v: float) -> int:
    return int(math.floor(v + 0.5))


def cells_for_point(
    x: float, y: float, crop: CropBox, grid: int, neighborhood: int
) -> Tuple[Tuple[int, int], ...]:
    """Grid cells sampled for an image point, ordered by (cx, cy).

    Points outside the crop clamp to its edge, and every cell index
    clamps into [0, grid).  neighborhood 1 takes the nearest cell, 2 the
    2x2 floor/ceil block (which collapses on integer positions), 3 the
    3x3 block around the nearest cell.
    """
    if neighborhood not in (1, 2, 3):
        raise ValueError(f"neighborhood must be 1, 2 or 3, got {neighborhood}")
    half = crop.side / 2.0
    lx = min(max(x - (crop.cx - half), 0.0), crop.side)
    ly = min(max(y - (crop.cy - half), 0.0), crop.side)
    fx = lx * grid / crop.side
    fy = ly * grid / crop.side
    if neighborhood == 1:
        raw = [(_nearest(fx), _nearest(fy))]
    elif neighborhood == 2:
        xs = (math.floor(fx), math.ceil(fx))
        ys = (math.floor(fy), math.ceil(fy))
        raw = [(int(gx), int(gy)) for gx in xs for gy in ys]
    else:
        nx, ny = _nearest(fx), _nearest(fy)
        raw = [(nx + dx, ny + dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
    top = grid - 1
    cells = {(min(max(gx, 0), top), min(max(gy, 0), top)) for gx, gy in raw}
    return tuple(sorted(cells))


def extract_crop(
    image: np.ndarray,
    crop: CropBox,
    size: int = CROP_SIZE,
    interpolation: str = "bilinear",
) -> np.ndarray:
    """Resample the crop square to size x size pixels.

    One affine warp maps [cx - side/2, cx + side/2) onto [0, size), so no
    intermediate rounding of the crop rectangle occurs.  Pixels outside
    the image replicate the border rather than injecting black.
    """
    if interpolation not in INTERPOLATIONS:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    scale = size / crop.side
    m = np.array(
        [
            [scale, 0.0, size / 2.0 - crop.cx * scale],
            [0.0, scale, size / 2.0 - crop.cy * scale],
        ],
        dtype=np.float64,
    )
    return cv2.warpAffine(
        image,
        m,
        (size, size),
        flags=INTERPOLATIONS[interpolation],
        borderMode=cv2.BORDER_REPLICATE,
    )
