"""Domain types for keypoint-based player tracking.

A player detection is a fixed-length list of 25 body part keypoints, each
with a confidence score and a presence flag.  Bounding boxes are derived
from the keypoints rather than carried as independent state, so every
geometric quantity downstream (centroids, crops, grid cells) is a pure
function of the pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence as TypingSequence

__all__ = [
    "NUM_PARTS",
    "PART_NAMES",
    "PART_INDEX",
    "PART_PRESETS",
    "Keypoint",
    "BoundingBox",
    "Detection",
    "FrameMeta",
    "Sequence",
    "NoPartsPresent",
    "derive_bbox",
    "shared_parts",
    "resolve_part_subset",
]

NUM_PARTS = 25

# 25-part body convention, head to toe.  Index 1 is the chest (neck base),
# 8 the mid hip.  Foot sub-part naming mirrors left/right symmetrically.
PART_NAMES = (
    "nose",          # 0
    "chest",         # 1
    "r_shoulder",    # 2
    "r_elbow",       # 3
    "r_wrist",       # 4
    "l_shoulder",    # 5
    "l_elbow",       # 6
    "l_wrist",       # 7
    "mid_hip",       # 8
    "r_hip",         # 9
    "r_knee",        # 10
    "r_ankle",       # 11
    "l_hip",         # 12
    "l_knee",        # 13
    "l_ankle",       # 14
    "r_eye",         # 15
    "l_eye",         # 16
    "r_ear",         # 17
    "l_ear",         # 18
    "l_toes",        # 19
    "l_heel",        # 20
    "l_mid_foot",    # 21
    "r_toes",        # 22
    "r_heel",        # 23
    "r_mid_foot",    # 24
)

PART_INDEX = {name: idx for idx, name in enumerate(PART_NAMES)}

# Torso-first subsets ordered by how reliably each part stays visible
# during play.  "top6" is torso only, "top12" adds limb joints, "top20"
# drops the face and one foot tip.
_TOP6 = ("chest", "l_shoulder", "r_shoulder", "r_hip", "mid_hip", "l_hip")
_TOP12 = _TOP6 + ("l_knee", "r_knee", "l_elbow", "r_elbow", "l_ankle", "r_ankle")
_TOP20_EXCLUDED = ("r_mid_foot", "l_eye", "nose", "r_eye", "r_ear")

PART_PRESETS = {
    "top6": tuple(sorted(PART_INDEX[n] for n in _TOP6)),
    "top12": tuple(sorted(PART_INDEX[n] for n in _TOP12)),
    "top20": tuple(
        sorted(i for i, n in enumerate(PART_NAMES) if n not in _TOP20_EXCLUDED)
    ),
    "all": tuple(range(NUM_PARTS)),
}


class NoPartsPresent(ValueError):
    """A detection carries no present keypoints, so no box can be derived."""


@dataclass(frozen=True)
class Keypoint:
    """One body part observation in image coordinates (pixels, y down)."""

    x: float
    y: float
    conf: float
    present: bool = True

    @staticmethod
    def absent() -> "Keypoint":
        return Keypoint(0.0, 0.0, 0.0, present=False)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, inclusive of its edges."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError(f"inverted box: {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    @property
    def bottom_center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), self.y_max)

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True, eq=False)
class Detection:
    """A single player observation: 25 keypoint slots plus optional features.

    Attributes:
        frame_id: Frame the detection belongs to.
        det_id: Detection index, unique within its frame.
        keypoints: Exactly 25 slots; absent parts use Keypoint.absent().
        feat_ref: Relative path of the detection's feature file, if any.
        features: Loaded part features, attached after construction via
            dataclasses.replace (see courttrack.features.PartFeatureSet).
    """

    frame_id: int
    det_id: int
    keypoints: tuple[Keypoint, ...]
    feat_ref: Optional[str] = None
    features: Optional[object] = None

    def __post_init__(self) -> None:
        if len(self.keypoints) != NUM_PARTS:
            raise ValueError(
                f"detection needs {NUM_PARTS} keypoint slots, got {len(self.keypoints)}"
            )

    def with_features(self, features: object) -> "Detection":
        return replace(self, features=features)

    def with_keypoints(self, keypoints: Iterable[Keypoint]) -> "Detection":
        return replace(self, keypoints=tuple(keypoints))

    @property
    def bbox(self) -> BoundingBox:
        return derive_bbox(self.keypoints)


@dataclass(frozen=True)
class FrameMeta:
    """Per-frame context: dimensions and an optional image path."""

    frame_id: int
    width: int
    height: int
    image: Optional[str] = None

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame {self.frame_id}: non-positive dimensions")


@dataclass
class Sequence:
    """An ordered run of frames with their detections.

    Frames with no surviving detections still appear (with an empty list);
    the tracker relies on that to tell a detector dropout apart from a
    missing frame.
    """

    frames: list[FrameMeta]
    detections: dict[int, list[Detection]] = field(default_factory=dict)
    fps_effective: float = 4.0

    def __post_init__(self) -> None:
        ids = [f.frame_id for f in self.frames]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("frame ids must be strictly increasing")
        for fid, dets in self.detections.items():
            det_ids = [d.det_id for d in dets]
            if len(det_ids) != len(set(det_ids)):
                raise ValueError(f"frame {fid}: duplicate detection ids")

    @property
    def frame_ids(self) -> list[int]:
        return [f.frame_id for f in self.frames]

    def frame_detections(self, frame_id: int) -> list[Detection]:
        return self.detections.get(frame_id, [])

    def meta(self, frame_id: int) -> FrameMeta:
        for f in self.frames:
            if f.frame_id == frame_id:
                return f
        raise KeyError(frame_id)


def derive_bbox(keypoints: TypingSequence[Keypoint]) -> BoundingBox:
    """Tight axis-aligned box over the present keypoints.

    Raises:
        NoPartsPresent: if no keypoint has its presence flag set.
    """
    xs = [kp.x for kp in keypoints if kp.present]
    ys = [kp.y for kp in keypoints if kp.present]
    if not xs:
        raise NoPartsPresent("no present keypoints to derive a box from")
    return BoundingBox(min(xs), min(ys), max(xs), max(ys))


def shared_parts(a: Detection, b: Detection, conf_threshold: float = 0.3) -> tuple[int, ...]:
    """Part ids observed confidently in both detections, ascending.

    A part qualifies when it is present and its confidence reaches
    conf_threshold on both sides.  The result may be empty; appearance
    costs fall back to geometry in that case.
    """
    out = []
    for k in range(NUM_PARTS):
        ka, kb = a.keypoints[k], b.keypoints[k]
        if ka.present and kb.present and ka.conf >= conf_threshold and kb.conf >= conf_threshold:
            out.append(k)
    return tuple(out)


def resolve_part_subset(spec: str | TypingSequence[int]) -> tuple[int, ...]:
    """Turn a subset spec (preset name, id list, or comma string) into part ids."""
    if isinstance(spec, str):
        name = spec.strip().lower()
        if name in PART_PRESETS:
            return PART_PRESETS[name]
        try:
            ids = tuple(int(tok) for tok in name.split(",") if tok.strip())
        except ValueError as exc:
            raise ValueError(f"unknown part subset {spec!r}") from exc
    else:
        ids = tuple(int(i) for i in spec)
    if not ids:
        raise ValueError("empty part subset")
    bad = [i for i in ids if not 0 <= i < NUM_PARTS]
    if bad:
        raise ValueError(f"part ids out of range: {bad}")
    return tuple(sorted(set(ids)))
