"""Skeleton adapter and backbone wrappers."""

import numpy as np
import pytest
import torch

from courtexport.models import (
    ModelLoadError,
    PART_NAMES,
    coco_to_parts,
    load_backbone,
    load_pose_estimator,
    run_backbone,
)

_COCO_NAMES = (
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)


def _distinct_skeleton():
    joints = np.array([[10.0 * i, 10.0 * i + 1.0] for i in range(17)])
    scores = np.linspace(0.4, 0.8, 17)
    return joints, scores


def test_direct_joints_land_on_matching_parts():
    joints, scores = _distinct_skeleton()
    parts = coco_to_parts(joints, scores)
    for coco_idx, name in enumerate(_COCO_NAMES):
        if name == "nose":
            part_id = PART_NAMES.index("nose")
        else:
            side, joint = name.split("_", 1)
            part_id = PART_NAMES.index(f"{side[0]}_{joint}")
        assert parts[part_id, 0] == joints[coco_idx, 0]
        assert parts[part_id, 1] == joints[coco_idx, 1]
        assert parts[part_id, 2] == pytest.approx(scores[coco_idx])


def test_chest_is_shoulder_midpoint_with_weaker_confidence():
    joints, scores = _distinct_skeleton()
    scores[5], scores[6] = 0.9, 0.3
    parts = coco_to_parts(joints, scores)
    chest = parts[PART_NAMES.index("chest")]
    assert chest[0] == pytest.approx((joints[5, 0] + joints[6, 0]) / 2)
    assert chest[1] == pytest.approx((joints[5, 1] + joints[6, 1]) / 2)
    assert chest[2] == pytest.approx(0.3)


def test_mid_hip_is_hip_midpoint():
    joints, scores = _distinct_skeleton()
    parts = coco_to_parts(joints, scores)
    mid_hip = parts[PART_NAMES.index("mid_hip")]
    assert mid_hip[0] == pytest.approx((joints[11, 0] + joints[12, 0]) / 2)
    assert mid_hip[2] == pytest.approx(min(scores[11], scores[12]))


def test_foot_parts_stay_absent():
    joints, scores = _distinct_skeleton()
    parts = coco_to_parts(joints, scores)
    for name in ("l_toes", "l_heel", "l_mid_foot", "r_toes", "r_heel", "r_mid_foot"):
        assert np.isnan(parts[PART_NAMES.index(name)]).all()


def test_confidence_clamps_into_unit_range():
    joints, scores = _distinct_skeleton()
    scores[0], scores[1] = 1.7, -0.3
    parts = coco_to_parts(joints, scores)
    assert parts[PART_NAMES.index("nose"), 2] == 1.0
    assert parts[PART_NAMES.index("l_eye"), 2] == 0.0


def test_full_detection_keeps_many_confident_parts():
    joints, _ = _distinct_skeleton()
    parts = coco_to_parts(joints, np.full(17, 0.9))
    confident = np.sum(parts[:, 2] >= 0.3)
    assert confident == 19  # 17 direct joints plus chest and mid hip
    assert confident >= 14


def test_rejects_wrong_joint_count():
    with pytest.raises(ValueError, match="17"):
        coco_to_parts(np.zeros((16, 2)), np.zeros(16))


def test_backbone_rejects_unknown_layer():
    with pytest.raises(ValueError, match="layer"):
        load_backbone("b1c1", pretrained=False)


@pytest.fixture(scope="module")
def deep_trunk():
    return load_backbone("b5c2", pretrained=False, seed=0)


def test_trunk_stage_shapes(deep_trunk):
    captured = {}

    def grab(idx):
        def hook(module, inputs, output):
            captured[idx] = tuple(output.shape[1:])

        return hook

    handles = [deep_trunk[i].register_forward_hook(grab(i)) for i in (8, 13, 22)]
    torch.manual_seed(1)
    crop = (np.random.default_rng(1).uniform(0, 255, (224, 224, 3))).astype(np.uint8)
    out = run_backbone(deep_trunk, crop)
    for handle in handles:
        handle.remove()
    assert captured[8] == (128, 112, 112)
    assert captured[13] == (256, 56, 56)
    assert captured[22] == (512, 28, 28)
    assert out.shape == (512, 14, 14)
    assert out.dtype == np.float32


def test_run_backbone_is_deterministic(deep_trunk):
    crop = (np.random.default_rng(2).uniform(0, 255, (224, 224, 3))).astype(np.uint8)
    first = run_backbone(deep_trunk, crop)
    second = run_backbone(deep_trunk, crop)
    assert np.array_equal(first, second)


def test_uniform_crop_gives_identical_interior_cells(deep_trunk):
    # a constant input varies only through border padding, so away from
    # the edges every cell of a conv map holds the same vector
    trunk = deep_trunk[:23]  # ends on the 28x28 stage
    crop = np.full((224, 224, 3), 57, dtype=np.uint8)
    act = run_backbone(trunk, crop)
    assert act.shape == (512, 28, 28)
    interior = act[:, 8:20, 8:20]
    reference = interior[:, :1, :1]
    assert np.abs(interior - reference).max() < 1e-5


def test_pretrained_backbone_loads_or_raises_cleanly():
    try:
        trunk = load_backbone("b4c2", pretrained=True)
    except ModelLoadError as exc:
        assert "vgg19" in str(exc)
    else:
        assert len(trunk) == 23


def test_pose_estimator_loads_or_raises_cleanly():
    try:
        load_pose_estimator()
    except ModelLoadError as exc:
        assert "pose" in str(exc)


def test_pose_on_fixture_photo_finds_confident_parts():
    """With pretrained weights and a real photo, one person should carry
    at least 14 parts above 0.3 confidence."""
    from pathlib import Path

    photo = Path(__file__).parent / "data" / "person.jpg"
    if not photo.exists():
        pytest.skip("no fixture photo in tests/data")
    try:
        pose = load_pose_estimator()
    except ModelLoadError:
        pytest.skip("pretrained pose weights unavailable in this environment")
    import cv2

    people = pose(cv2.imread(str(photo)))
    assert people, "no person found in fixture photo"
    best = max(people, key=lambda parts: np.nansum(parts[:, 2]))
    assert np.sum(best[:, 2] >= 0.3) >= 14
