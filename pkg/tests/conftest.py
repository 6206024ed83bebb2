"""Shared fixture builders for the test suite."""

from __future__ import annotations

import math

import numpy as np

from courttrack.model import NUM_PARTS, Detection, Keypoint

# Acceptance tests append "[C<n>] PASS ..." lines here; the terminal
# summary hook prints them so the final report carries one line per
# acceptance criterion even without -s.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def make_detection(
    parts: dict[int, tuple[float, float]] | dict[int, tuple[float, float, float]],
    frame_id: int = 0,
    det_id: int = 0,
    conf: float = 1.0,
    features=None,
    feat_ref=None,
) -> Detection:
    """Detection with the given parts present; entries may carry their own conf."""
    kps = []
    for k in range(NUM_PARTS):
        if k in parts:
            entry = parts[k]
            if len(entry) == 3:
                x, y, c = entry
            else:
                x, y = entry
                c = conf
            kps.append(Keypoint(float(x), float(y), float(c)))
        else:
            kps.append(Keypoint.absent())
    return Detection(
        frame_id=frame_id,
        det_id=det_id,
        keypoints=tuple(kps),
        feat_ref=feat_ref,
        features=features,
    )


def box_detection(
    x_min: float,
    y_min: float,
    x_max: float,
    y_max: float,
    frame_id: int = 0,
    det_id: int = 0,
) -> Detection:
    """Two-corner detection whose derived box is exactly the given box."""
    return make_detection(
        {0: (x_min, y_min), 8: (x_max, y_max)}, frame_id=frame_id, det_id=det_id
    )


def render_band(
    shape: tuple[int, int],
    p: tuple[float, float],
    q: tuple[float, float],
    half_width: float = 2.5,
    value: float = 255.0,
    img: np.ndarray | None = None,
) -> np.ndarray:
    """Draw a stroke from p to q whose intensity falls linearly with the
    distance to the ideal segment.  Gradients along the stroke are exactly
    perpendicular to it, which is what the segment grower expects from
    smooth-edged imagery (hard-quantized 1 px lines genuinely have
    incoherent orientations and are not a fair fixture)."""
    h, w = shape
    if img is None:
        img = np.zeros(shape, dtype=np.float64)
    ys, xs = np.mgrid[0:h, 0:w]
    px, py = p
    qx, qy = q
    dx, dy = qx - px, qy - py
    length = math.hypot(dx, dy)
    t = ((xs - px) * dx + (ys - py) * dy) / (length * length)
    t = np.clip(t, 0.0, 1.0)
    d = np.hypot(xs - (px + t * dx), ys - (py + t * dy))
    img[:] = np.maximum(img, value * np.clip(1.0 - d / half_width, 0.0, 1.0))
    return img
