"""Shared fixtures and small builders for the exporter tests."""

from __future__ import annotations

import json
from typing import List, Optional, Tuple

import numpy as np
import torch

ACCEPTANCE_LINES: List[str] = []

# (x offset, y offset) per part in units of person height, anchored on
# the hip midpoint.  Ordered like the wire format's 25 parts.
_POSE_TEMPLATE = (
    (0.00, -0.46),   # nose
    (0.00, -0.30),   # chest
    (-0.12, -0.32),  # r_shoulder
    (-0.16, -0.18),  # r_elbow
    (-0.18, -0.05),  # r_wrist
    (0.12, -0.32),   # l_shoulder
    (0.16, -0.18),   # l_elbow
    (0.18, -0.05),   # l_wrist
    (0.00, 0.00),    # mid_hip
    (-0.08, 0.00),   # r_hip
    (-0.07, 0.22),   # r_knee
    (-0.06, 0.45),   # r_ankle
    (0.08, 0.00),    # l_hip
    (0.07, 0.22),    # l_knee
    (0.06, 0.45),    # l_ankle
    (-0.03, -0.50),  # r_eye
    (0.03, -0.50),   # l_eye
    (-0.05, -0.48),  # r_ear
    (0.05, -0.48),   # l_ear
    (0.09, 0.52),    # l_toes
    (0.05, 0.50),    # l_heel
    (0.07, 0.51),    # l_mid_foot
    (-0.09, 0.52),   # r_toes
    (-0.05, 0.50),   # r_heel
    (-0.07, 0.51),   # r_mid_foot
)


def build_person(cx: float, cy: float, height: float, conf: float = 0.9) -> np.ndarray:
    """A full 25-part skeleton centered on (cx, cy)."""
    parts = np.empty((25, 3))
    for i, (dx, dy) in enumerate(_POSE_TEMPLATE):
        parts[i] = (cx + dx * height, cy + dy * height, conf)
    return parts


def person_box(parts: np.ndarray) -> Tuple[float, float, float, float]:
    """(x_min, y_min, width, height) over the present parts."""
    present = np.isfinite(parts[:, 0])
    xs, ys = parts[present, 0], parts[present, 1]
    return (
        float(xs.min()),
        float(ys.min()),
        float(xs.max() - xs.min()),
        float(ys.max() - ys.min()),
    )


def write_kp_jsonl(path, rows) -> None:
    """rows: iterable of (frame, det, (25, 3) array); NaN rows become null."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame_id, det_id, parts in rows:
            kp: List[Optional[List[float]]] = []
            for x, y, conf in parts:
                if np.isnan(x) or np.isnan(y):
                    kp.append(None)
                else:
                    kp.append([float(x), float(y), float(conf)])
            fh.write(json.dumps({"frame": frame_id, "det": det_id, "kp": kp}) + "\n")


def tiny_backbone(channels: int = 8, grid: int = 28, seed: int = 0) -> torch.nn.Module:
    """Single strided conv whose output grid matches a layer's map size.

    No activation follows the conv, so sampled vectors are never all
    zero and entry counts stay exactly predictable.
    """
    stride = 224 // grid
    torch.manual_seed(seed)
    net = torch.nn.Conv2d(3, channels, kernel_size=stride, stride=stride)
    return net.eval()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("secondary component acceptance")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
