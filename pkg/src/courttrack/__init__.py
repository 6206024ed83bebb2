"""courttrack: single-camera multi-player tracking from pose keypoints.

The package is organised around a tracking-by-detection loop: per frame,
pairwise association costs against the two preceding frames are fused from
box geometry and appearance (jersey color patches or convolutional part
features), resolved greedily, and scored with CLEAR-style metrics.  A
seeded synthetic generator produces full fixture directories so every
stage can be exercised without video assets.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .model import (
    BoundingBox,
    Detection,
    FrameMeta,
    Keypoint,
    NoPartsPresent,
    PART_INDEX,
    PART_NAMES,
    PART_PRESETS,
    Sequence,
    derive_bbox,
    shared_parts,
)

__all__ = [
    "__version__",
    "BoundingBox",
    "Detection",
    "FrameMeta",
    "Keypoint",
    "NoPartsPresent",
    "PART_INDEX",
    "PART_NAMES",
    "PART_PRESETS",
    "Sequence",
    "derive_bbox",
    "shared_parts",
]
