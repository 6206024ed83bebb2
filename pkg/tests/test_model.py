"""Domain types: derived boxes, shared parts, subsets, sequence rules."""

from __future__ import annotations

import pytest

from courttrack.model import (
    NUM_PARTS,
    PART_INDEX,
    PART_NAMES,
    PART_PRESETS,
    BoundingBox,
    Detection,
    FrameMeta,
    Keypoint,
    NoPartsPresent,
    Sequence,
    derive_bbox,
    resolve_part_subset,
    shared_parts,
)

from conftest import make_detection


def test_part_table_shape():
    assert len(PART_NAMES) == NUM_PARTS == 25
    assert len(set(PART_NAMES)) == NUM_PARTS
    assert PART_INDEX["chest"] == 1
    assert PART_INDEX["mid_hip"] == 8


def test_part_presets_sizes_and_nesting():
    assert len(PART_PRESETS["top6"]) == 6
    assert len(PART_PRESETS["top12"]) == 12
    assert len(PART_PRESETS["top20"]) == 20
    assert PART_PRESETS["all"] == tuple(range(NUM_PARTS))
    assert set(PART_PRESETS["top6"]) <= set(PART_PRESETS["top12"])
    assert set(PART_PRESETS["top12"]) <= set(PART_PRESETS["top20"])


def test_derive_bbox_single_point():
    kps = make_detection({3: (10.0, 20.0)}).keypoints
    assert derive_bbox(kps) == BoundingBox(10.0, 20.0, 10.0, 20.0)


def test_derive_bbox_min_max_scan():
    kps = make_detection({0: (5.0, 5.0), 1: (15.0, 25.0), 2: (10.0, 10.0)}).keypoints
    assert derive_bbox(kps) == BoundingBox(5.0, 5.0, 15.0, 25.0)


def test_derive_bbox_ignores_absent():
    # The absent slot sits at (0, 0); it must not drag the box corner there.
    kps = make_detection({5: (7.0, 7.0), 6: (9.0, 9.0)}).keypoints
    assert derive_bbox(kps) == BoundingBox(7.0, 7.0, 9.0, 9.0)


def test_derive_bbox_empty_raises():
    kps = tuple(Keypoint.absent() for _ in range(NUM_PARTS))
    with pytest.raises(NoPartsPresent):
        derive_bbox(kps)


def test_bbox_properties():
    box = BoundingBox(10.0, 20.0, 30.0, 60.0)
    assert box.width == 20.0
    assert box.height == 40.0
    assert box.center == (20.0, 40.0)
    assert box.bottom_center == (20.0, 60.0)
    assert box.area == 800.0


def test_bbox_rejects_inverted():
    with pytest.raises(ValueError):
        BoundingBox(10.0, 0.0, 5.0, 10.0)


def test_shared_parts_all_present():
    a = make_detection({k: (float(k), 0.0) for k in range(NUM_PARTS)})
    b = make_detection({k: (float(k), 1.0) for k in range(NUM_PARTS)})
    assert shared_parts(a, b) == tuple(range(NUM_PARTS))


def test_shared_parts_intersection():
    a = make_detection({0: (0.0, 0.0, 0.9), 1: (1.0, 0.0, 0.9)})
    b = make_detection({1: (1.0, 0.0, 0.9), 2: (2.0, 0.0, 0.9)})
    assert shared_parts(a, b) == (1,)


def test_shared_parts_threshold_per_side():
    a = make_detection({3: (0.0, 0.0, 0.29), 4: (1.0, 0.0, 0.5)})
    b = make_detection({3: (0.0, 0.0, 0.95), 4: (1.0, 0.0, 0.5)})
    assert shared_parts(a, b, conf_threshold=0.3) == (4,)


def test_detection_needs_25_slots():
    with pytest.raises(ValueError):
        Detection(frame_id=0, det_id=0, keypoints=(Keypoint(0.0, 0.0, 1.0),))


def test_detection_with_features_is_nondestructive():
    det = make_detection({0: (1.0, 2.0)})
    tagged = det.with_features("sentinel")
    assert det.features is None
    assert tagged.features == "sentinel"
    assert tagged.keypoints == det.keypoints


def test_frame_meta_rejects_empty():
    with pytest.raises(ValueError):
        FrameMeta(frame_id=0, width=0, height=100)


def test_sequence_orders_and_uniqueness():
    frames = [FrameMeta(0, 100, 100), FrameMeta(1, 100, 100)]
    seq = Sequence(frames=frames, detections={0: [make_detection({0: (1.0, 1.0)})]})
    assert seq.frame_ids == [0, 1]
    assert seq.frame_detections(1) == []
    with pytest.raises(ValueError):
        Sequence(frames=[FrameMeta(1, 10, 10), FrameMeta(0, 10, 10)])
    dup = [
        make_detection({0: (1.0, 1.0)}, det_id=0),
        make_detection({0: (2.0, 2.0)}, det_id=0),
    ]
    with pytest.raises(ValueError):
        Sequence(frames=frames, detections={0: dup})


def test_resolve_part_subset_forms():
    assert resolve_part_subset("top6") == PART_PRESETS["top6"]
    assert resolve_part_subset("3,1,2,1") == (1, 2, 3)
    assert resolve_part_subset([4, 0]) == (0, 4)
    with pytest.raises(ValueError):
        resolve_part_subset("")
    with pytest.raises(ValueError):
        resolve_part_subset("not_a_preset")
    with pytest.raises(ValueError):
        resolve_part_subset([25])
