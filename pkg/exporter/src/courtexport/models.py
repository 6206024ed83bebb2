"""Model loading and inference wrappers.

Two networks are involved: a pose estimator that finds people and their
joints, and a VGG-19 trunk whose intermediate activations become the
appearance features.  Both are optional at import time; loading happens
lazily so the precomputed-keypoint path never touches network weights it
does not need.
"""

from __future__ import annotations

from typing import Callable, List

import numpy as np
import torch
import torchvision

from .gridmap import LAYER_GRIDS

__all__ = [
    "ModelLoadError",
    "PART_NAMES",
    "NUM_PARTS",
    "coco_to_parts",
    "load_backbone",
    "run_backbone",
    "load_pose_estimator",
]


class ModelLoadError(RuntimeError):
    """Raised when network weights cannot be obtained."""


# Part order used by the downstream tracker; index is the wire part id.
PART_NAMES = (
    "nose",
    "chest",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "mid_hip",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_eye",
    "l_eye",
    "r_ear",
    "l_ear",
    "l_toes",
    "l_heel",
    "l_mid_foot",
    "r_toes",
    "r_heel",
    "r_mid_foot",
)
NUM_PARTS = len(PART_NAMES)

# COCO-17 joint index -> part id above.  Feet beyond the ankles have no
# COCO counterpart and stay absent.
_COCO_TO_PART = {
    0: 0,   # nose
    1: 16,  # left eye
    2: 15,  # right eye
    3: 18,  # left ear
    4: 17,  # right ear
    5: 5,   # left shoulder
    6: 2,   # right shoulder
    7: 6,   # left elbow
    8: 3,   # right elbow
    9: 7,   # left wrist
    10: 4,  # right wrist
    11: 12,  # left hip
    12: 9,   # right hip
    13: 13,  # left knee
    14: 10,  # right knee
    15: 14,  # left ankle
    16: 11,  # right ankle
}

_CHEST = 1
_MID_HIP = 8

# Last VGG-19 `features` index (exclusive) per layer, ending on the ReLU
# after the block's second convolution.
_LAYER_SLICE = {"b2c2": 9, "b3c2": 14, "b4c2": 23, "b5c2": 32}

_IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def coco_to_parts(joints: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Convert one COCO-17 skeleton to the 25-part layout.

    joints is (17, 2) or (17, 3); scores holds one confidence per joint.
    The chest is synthesized as the shoulder midpoint and the mid hip as
    the hip midpoint, each carrying the weaker parent confidence.
    Confidences clamp into [0, 1] because downstream files reject values
    outside that range.
    """
    joints = np.asarray(joints, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if joints.shape[0] != 17 or scores.shape[0] != 17:
        raise ValueError("expected 17 COCO joints")
    parts = np.full((NUM_PARTS, 3), np.nan)
    conf = np.clip(scores, 0.0, 1.0)
    for coco_idx, part_id in _COCO_TO_PART.items():
        parts[part_id] = (joints[coco_idx, 0], joints[coco_idx, 1], conf[coco_idx])
    for derived, (a, b) in ((_CHEST, (5, 6)), (_MID_HIP, (11, 12))):
        parts[derived] = (
            (joints[a, 0] + joints[b, 0]) / 2.0,
            (joints[a, 1] + joints[b, 1]) / 2.0,
            min(conf[a], conf[b]),
        )
    return parts


def load_backbone(
    layer: str, pretrained: bool = True, seed: int = 0, device: str = "cpu"
) -> torch.nn.Module:
    """VGG-19 trunk truncated after the requested layer, in eval mode.

    pretrained=False initializes from the given seed instead, which is
    useful offline; the vectors are still deterministic and distinct per
    input, just not semantically meaningful.
    """
    if layer not in _LAYER_SLICE:
        raise ValueError(f"unknown layer {layer!r}")
    if pretrained:
        try:
            net = torchvision.models.vgg19(
                weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1
            )
        except Exception as exc:  # noqa: BLE001  network/file errors vary by env
            raise ModelLoadError(f"cannot load vgg19 weights: {exc}") from exc
    else:
        torch.manual_seed(seed)
        net = torchvision.models.vgg19(weights=None)
    trunk = net.features[: _LAYER_SLICE[layer]].to(device).eval()
    for param in trunk.parameters():
        param.requires_grad_(False)
    return trunk


def run_backbone(trunk: torch.nn.Module, crop_bgr: np.ndarray) -> np.ndarray:
    """Forward one uint8 BGR crop, returning float32 (channels, h, w).

    Input preprocessing matches the ImageNet recipe the weights were
    trained with: RGB order, [0, 1] range, per-channel mean/std.
    """
    rgb = crop_bgr[:, :, ::-1].astype(np.float32) / 255.0
    rgb = (rgb - _IMAGENET_MEAN) / _IMAGENET_STD
    tensor = torch.from_numpy(np.ascontiguousarray(rgb.transpose(2, 0, 1)))[None]
    device = next(trunk.parameters()).device
    with torch.no_grad():
        out = trunk(tensor.to(device))
    return out[0].cpu().numpy()


def load_pose_estimator(
    score_threshold: float = 0.5, device: str = "cpu"
) -> Callable[[np.ndarray], List[np.ndarray]]:
    """Person keypoint detector returning (25, 3) arrays per person.

    Wraps a COCO-pretrained Keypoint R-CNN; there is no random-weight
    fallback here because untrained detections would be noise.
    """
    try:
        model = torchvision.models.detection.keypointrcnn_resnet50_fpn(
            weights=torchvision.models.detection.KeypointRCNN_ResNet50_FPN_Weights.DEFAULT
        )
    except Exception as exc:  # noqa: BLE001
        raise ModelLoadError(f"cannot load pose weights: {exc}") from exc
    model = model.to(device).eval()

    def run(image_bgr: np.ndarray) -> List[np.ndarray]:
        rgb = image_bgr[:, :, ::-1].astype(np.float32) / 255.0
        tensor = torch.from_numpy(np.ascontiguousarray(rgb.transpose(2, 0, 1)))
        with torch.no_grad():
            out = model([tensor.to(device)])[0]
        people = []
        for score, joints, joint_scores in zip(
            out["scores"].cpu().numpy(),
            out["keypoints"].cpu().numpy(),
            out["keypoints_scores"].cpu().numpy(),
        ):
            if score < score_threshold:
                continue
            people.append(coco_to_parts(joints[:, :2], joint_scores))
        return people

    return run


def expected_grid(layer: str) -> int:
    """Spatial size the trunk must produce for a standard crop."""
    return LAYER_GRIDS[layer]
