"""Court line detection and the playing-area filter.

The pipeline has two independent halves:

* Bottom-up: grow straight edge regions from image gradients
  (``detect_segments``), fuse collinear fragments into long lines
  (``join_segments``) and vote for the dominant sideline/baseline
  orientations (``dominant_orientations``).
* Top-down: given an orientation and a color filter describing the
  floor, sweep a family of parallel lines across the frame and score
  each by the color imbalance between the two bands flanking it
  (``sweep_boundary``).  The best-scoring line is the court edge.

The chosen boundaries are intersected into a convex playing area
(``court_polygon``) used to drop detections standing outside the court.

Coordinates are (x, y) pixels, x to the right, y down.  Orientations are
taken modulo pi (an undirected line).  Images are RGB uint8 arrays.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence as Seq

import cv2
import numpy as np

from .model import Detection

__all__ = [
    "LineSegment",
    "BoundaryLine",
    "HsvFilter",
    "CourtPolygon",
    "NoSidelineCandidate",
    "NoBaselineCandidate",
    "DegenerateImage",
    "EmptyPolygon",
    "to_hsv",
    "detect_segments",
    "join_segments",
    "dominant_orientations",
    "sweep_boundary",
    "court_polygon",
    "filter_by_court",
]

_EPS = 1e-9


class NoSidelineCandidate(ValueError):
    """No joined line spans the left and right image borders."""


class NoBaselineCandidate(ValueError):
    """No joined line is left over for the baseline vote."""


class DegenerateImage(ValueError):
    """The image is too small for any sweep candidate's bands to fit."""


class EmptyPolygon(ValueError):
    """Clipping left no usable court area."""


def _norm_angle(theta: float) -> float:
    return theta % math.pi


def _angular_diff(a: float, b: float) -> float:
    """Distance between undirected orientations, in [0, pi/2]."""
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


@dataclass(frozen=True)
class LineSegment:
    """A straight segment with the evidence (pixel length) behind it."""

    p1: tuple[float, float]
    p2: tuple[float, float]
    support: float

    @property
    def theta(self) -> float:
        return _norm_angle(
            math.atan2(self.p2[1] - self.p1[1], self.p2[0] - self.p1[0])
        )

    @property
    def length(self) -> float:
        return math.hypot(self.p2[0] - self.p1[0], self.p2[1] - self.p1[1])


@dataclass(frozen=True)
class BoundaryLine:
    """A court edge: border-to-border chord plus detection confidence."""

    p1: tuple[float, float]
    p2: tuple[float, float]
    theta: float
    support: float
    low_confidence: bool
    score: int


@dataclass(frozen=True)
class HsvFilter:
    """Color gate for floor pixels: hue band plus saturation/value floors.

    Hue is in degrees [0, 360); the band may wrap (lo > hi).  Saturation
    and value are in [0, 1].
    """

    hue_lo: float
    hue_hi: float
    sat_min: float = 0.0
    val_min: float = 0.0

    def mask(self, rgb: np.ndarray) -> np.ndarray:
        hsv = to_hsv(rgb)
        h = hsv[..., 0]
        if self.hue_lo <= self.hue_hi:
            in_hue = (h >= self.hue_lo) & (h <= self.hue_hi)
        else:
            in_hue = (h >= self.hue_lo) | (h <= self.hue_hi)
        return in_hue & (hsv[..., 1] >= self.sat_min) & (hsv[..., 2] >= self.val_min)


def to_hsv(rgb: np.ndarray) -> np.ndarray:
    """RGB uint8 -> float32 HSV with H in [0, 360) and S, V in [0, 1]."""
    scaled = np.asarray(rgb, dtype=np.float32) / 255.0
    return cv2.cvtColor(scaled, cv2.COLOR_RGB2HSV)


def _to_gray(image: np.ndarray) -> np.ndarray:
    if image.ndim == 3:
        return cv2.cvtColor(np.asarray(image, dtype=np.float32), cv2.COLOR_RGB2GRAY).astype(
            np.float64
        )
    return np.asarray(image, dtype=np.float64)


def detect_segments(
    image: np.ndarray,
    grad_threshold: float = 20.0,
    min_length: float = 30.0,
    angle_tol: float = math.pi / 8,
    min_pixels: int = 20,
) -> list[LineSegment]:
    """Grow straight segments from coherently oriented strong gradients.

    Strong-gradient pixels seed regions (strongest first); a region
    absorbs 8-connected strong pixels whose edge orientation stays
    within angle_tol of the region's running mean orientation.  Each
    region is then fit by its principal axis; short regions and wide
    blobs are rejected.  Suited to images where edges are sparse.

    Returns segments sorted by decreasing support (ties: by position).
    """
    gray = _to_gray(image)
    h, w = gray.shape
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    # Edge direction is perpendicular to the gradient; fold to [0, pi)
    # and keep the doubled-angle components for circular averaging.
    theta = (np.arctan2(gy, gx) + math.pi / 2.0) % math.pi
    cos2 = np.cos(2.0 * theta)
    sin2 = np.sin(2.0 * theta)
    strong = mag > grad_threshold
    visited = np.zeros_like(strong)
    sy, sx = np.nonzero(strong)
    seed_order = sorted(range(len(sy)), key=lambda i: (-mag[sy[i], sx[i]], sy[i], sx[i]))
    cos_tol = math.cos(2.0 * angle_tol)
    segments = []
    for seed_idx in seed_order:
        y0, x0 = int(sy[seed_idx]), int(sx[seed_idx])
        if visited[y0, x0]:
            continue
        queue = deque([(y0, x0)])
        visited[y0, x0] = True
        region: list[tuple[int, int]] = []
        sum_c = 0.0
        sum_s = 0.0
        while queue:
            y, x = queue.popleft()
            region.append((y, x))
            sum_c += cos2[y, x]
            sum_s += sin2[y, x]
            norm = math.hypot(sum_c, sum_s)
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    if not (0 <= ny < h and 0 <= nx < w):
                        continue
                    if visited[ny, nx] or not strong[ny, nx]:
                        continue
                    if norm > _EPS:
                        align = (
                            cos2[ny, nx] * sum_c + sin2[ny, nx] * sum_s
                        ) / norm
                        if align < cos_tol:
                            continue
                    visited[ny, nx] = True
                    queue.append((ny, nx))
        if len(region) < min_pixels:
            continue
        pts = np.array([(x, y) for y, x in region], dtype=np.float64)
        centroid = pts.mean(axis=0)
        centered = pts - centroid
        cov = centered.T @ centered / len(pts)
        eigvals, eigvecs = np.linalg.eigh(cov)
        axis = eigvecs[:, int(np.argmax(eigvals))]
        if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
            axis = -axis
        along = centered @ axis
        across = centered @ np.array([-axis[1], axis[0]])
        length = float(along.max() - along.min())
        width = float(across.max() - across.min())
        if length < min_length or width > 0.25 * length + 3.0:
            continue
        e1 = tuple(centroid + along.min() * axis)
        e2 = tuple(centroid + along.max() * axis)
        p1, p2 = sorted([e1, e2])
        segments.append(LineSegment(p1=p1, p2=p2, support=length))
    return sorted(segments, key=lambda s: (-s.support, s.p1, s.p2))


def _border_chord(
    point: tuple[float, float], theta: float, w: float, h: float
) -> Optional[tuple[tuple[float, float], tuple[float, float]]]:
    """Where the infinite line through point at angle theta crosses the
    image border rectangle; endpoints sorted lexicographically."""
    dx, dy = math.cos(theta), math.sin(theta)
    hits: list[tuple[float, float]] = []
    if abs(dx) > _EPS:
        for x_edge in (0.0, w):
            t = (x_edge - point[0]) / dx
            y = point[1] + t * dy
            if -_EPS <= y <= h + _EPS:
                hits.append((x_edge, min(max(y, 0.0), h)))
    if abs(dy) > _EPS:
        for y_edge in (0.0, h):
            t = (y_edge - point[1]) / dy
            x = point[0] + t * dx
            if -_EPS <= x <= w + _EPS:
                hits.append((min(max(x, 0.0), w), y_edge))
    unique: list[tuple[float, float]] = []
    for p in sorted(hits):
        if not unique or math.hypot(p[0] - unique[-1][0], p[1] - unique[-1][1]) > 1e-6:
            unique.append(p)
    if len(unique) < 2:
        return None
    return unique[0], unique[-1]


def _segment_chord(seg: LineSegment, w: float, h: float):
    mid = ((seg.p1[0] + seg.p2[0]) / 2.0, (seg.p1[1] + seg.p2[1]) / 2.0)
    return _border_chord(mid, seg.theta, w, h)


def join_segments(
    segments: Iterable[LineSegment],
    width: float,
    height: float,
    angle_tol: float = math.radians(3.0),
    border_tol: float = 40.0,
) -> list[LineSegment]:
    """Fuse fragments lying on the same infinite line.

    Each segment is extended to its border chord; two segments belong
    together when their orientations agree within angle_tol and both
    border points agree within border_tol.  A group merges into the
    support-weighted average of its border points, re-intersected with
    the border so the result is again a full chord.  Merged support is
    the sum of member supports, so total support is conserved.

    Segments whose line misses the image rectangle are dropped.
    """
    groups: list[dict] = []
    ordered = sorted(segments, key=lambda s: (-s.support, s.p1, s.p2))
    for seg in ordered:
        chord = _segment_chord(seg, width, height)
        if chord is None:
            continue
        a, b = chord
        for grp in groups:
            ga, gb = grp["a"], grp["b"]
            if (
                _angular_diff(seg.theta, grp["theta"]) <= angle_tol
                and math.hypot(a[0] - ga[0], a[1] - ga[1]) <= border_tol
                and math.hypot(b[0] - gb[0], b[1] - gb[1]) <= border_tol
            ):
                total = grp["support"] + seg.support
                wa = grp["support"] / total
                wb = seg.support / total
                grp["a"] = (ga[0] * wa + a[0] * wb, ga[1] * wa + a[1] * wb)
                grp["b"] = (gb[0] * wa + b[0] * wb, gb[1] * wa + b[1] * wb)
                grp["support"] = total
                grp["theta"] = _norm_angle(
                    math.atan2(grp["b"][1] - grp["a"][1], grp["b"][0] - grp["a"][0])
                )
                break
        else:
            groups.append({"a": a, "b": b, "support": seg.support, "theta": seg.theta})
    merged = []
    for grp in groups:
        mid = ((grp["a"][0] + grp["b"][0]) / 2.0, (grp["a"][1] + grp["b"][1]) / 2.0)
        chord = _border_chord(mid, grp["theta"], width, height)
        if chord is None:
            continue
        p1, p2 = chord
        merged.append(LineSegment(p1=p1, p2=p2, support=grp["support"]))
    return sorted(merged, key=lambda s: (-s.support, s.p1, s.p2))


def _spans_left_right(seg: LineSegment, width: float) -> bool:
    xs = sorted((seg.p1[0], seg.p2[0]))
    return xs[0] <= _EPS and xs[1] >= width - _EPS


def _weighted_circular_mean(lines: Seq[LineSegment]) -> float:
    c = sum(line.support * math.cos(2.0 * line.theta) for line in lines)
    s = sum(line.support * math.sin(2.0 * line.theta) for line in lines)
    return _norm_angle(math.atan2(s, c) / 2.0)


def _dominant_cluster_angle(lines: list[LineSegment], tol: float) -> float:
    clusters: list[list[LineSegment]] = []
    for line in sorted(lines, key=lambda s: (-s.support, s.theta)):
        for cluster in clusters:
            if _angular_diff(line.theta, _weighted_circular_mean(cluster)) <= tol:
                cluster.append(line)
                break
        else:
            clusters.append([line])
    best = max(clusters, key=lambda c: sum(line.support for line in c))
    return _weighted_circular_mean(best)


def dominant_orientations(
    lines: Seq[LineSegment],
    width: float,
    height: float,
    cluster_tol: float = math.radians(2.0),
) -> tuple[float, float]:
    """Vote joined lines into (sideline, baseline) orientations.

    Lines whose border chord spans the left and right image edges are
    sideline candidates; everything else votes for the baseline.  Within
    each family, orientations are clustered and the cluster with the
    most summed support wins; its angle is the support-weighted circular
    mean.

    Raises:
        NoSidelineCandidate: nothing spans left to right.
        NoBaselineCandidate: nothing is left for the baseline.
    """
    sidelines = [line for line in lines if _spans_left_right(line, width)]
    if not sidelines:
        raise NoSidelineCandidate("no line spans the left and right borders")
    rest = [line for line in lines if not _spans_left_right(line, width)]
    if not rest:
        raise NoBaselineCandidate("every line is a sideline candidate")
    return (
        _dominant_cluster_angle(sidelines, cluster_tol),
        _dominant_cluster_angle(rest, cluster_tol),
    )


def sweep_boundary(
    image: np.ndarray,
    theta: float,
    hsv_filter: HsvFilter,
    kind: str,
    offset: float = 25.0,
    step: float = 12.0,
) -> BoundaryLine:
    """Find the court edge among parallel lines of a fixed orientation.

    Candidate lines at the given orientation are anchored every ``step``
    pixels: sidelines at (w/2, k*step) sweeping vertically, baselines at
    (k*step, h/2) sweeping horizontally.  Only candidates whose two
    flanking bands (within ``offset`` along the normal) fit entirely in
    the frame take part.  Each candidate is scored by the absolute
    difference between floor-colored pixel counts above and below; a
    court edge has floor on one side only, which maximizes the score.
    Ties go to the smallest sweep position.

    The result is flagged low_confidence when the winning score is
    under 5% of the winner's total band area in pixels.

    Raises:
        DegenerateImage: no candidate's bands fit inside the frame.
        ValueError: unknown kind.
    """
    if kind not in ("sideline", "baseline"):
        raise ValueError(f"kind must be 'sideline' or 'baseline', got {kind!r}")
    h, w = image.shape[:2]
    sweep_extent = h if kind == "sideline" else w
    positions = [
        k * step
        for k in range(int(math.floor(sweep_extent / step)) + 1)
        if offset <= k * step <= sweep_extent - offset
    ]
    if not positions:
        raise DegenerateImage(
            f"no sweep candidate fits: extent {sweep_extent} with offset {offset}"
        )
    mask = hsv_filter.mask(image)
    ys, xs = np.nonzero(mask)
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    if kind == "sideline":
        base = -(xs - w / 2.0) * sin_t + ys * cos_t
        shifts = [c * cos_t for c in positions]
    else:
        base = -xs * sin_t + (ys - h / 2.0) * cos_t
        shifts = [-c * sin_t for c in positions]
    base = np.sort(base)
    best_idx = 0
    best_score = -1
    for idx, t in enumerate(shifts):
        above = int(
            np.searchsorted(base, t + offset, side="right")
            - np.searchsorted(base, t, side="right")
        )
        below = int(
            np.searchsorted(base, t, side="left")
            - np.searchsorted(base, t - offset, side="left")
        )
        score = abs(above - below)
        if score > best_score:
            best_score = score
            best_idx = idx
    c = positions[best_idx]
    anchor = (w / 2.0, c) if kind == "sideline" else (c, h / 2.0)
    chord = _border_chord(anchor, theta, float(w), float(h))
    if chord is None:
        raise DegenerateImage("winning sweep line misses the image rectangle")
    p1, p2 = chord
    # Exact band area of the winner, over every pixel of the frame.
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    signed = (gx - anchor[0]) * (-sin_t) + (gy - anchor[1]) * cos_t
    band_area = int(np.count_nonzero(np.abs(signed) <= offset))
    low_confidence = best_score < 0.05 * band_area
    return BoundaryLine(
        p1=p1,
        p2=p2,
        theta=_norm_angle(theta),
        support=math.hypot(p2[0] - p1[0], p2[1] - p1[1]),
        low_confidence=low_confidence,
        score=best_score,
    )


@dataclass(frozen=True)
class CourtPolygon:
    """Convex playing area in image coordinates."""

    vertices: tuple[tuple[float, float], ...]

    @property
    def area(self) -> float:
        total = 0.0
        n = len(self.vertices)
        for i in range(n):
            x1, y1 = self.vertices[i]
            x2, y2 = self.vertices[(i + 1) % n]
            total += x1 * y2 - x2 * y1
        return abs(total) / 2.0

    def contains(self, p: tuple[float, float], eps: float = 1e-6) -> bool:
        """Boundary-inclusive membership via an even-odd ray cast."""
        px, py = p
        n = len(self.vertices)
        for i in range(n):
            ax, ay = self.vertices[i]
            bx, by = self.vertices[(i + 1) % n]
            ux, uy = bx - ax, by - ay
            seg_len2 = ux * ux + uy * uy
            if seg_len2 > 0:
                t = ((px - ax) * ux + (py - ay) * uy) / seg_len2
                t = min(max(t, 0.0), 1.0)
                if math.hypot(px - (ax + t * ux), py - (ay + t * uy)) <= eps:
                    return True
            elif math.hypot(px - ax, py - ay) <= eps:
                return True
        inside = False
        for i in range(n):
            ax, ay = self.vertices[i]
            bx, by = self.vertices[(i + 1) % n]
            if (ay > py) != (by > py):
                x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
                if px < x_cross:
                    inside = not inside
        return inside


def _line_fn(p1: tuple[float, float], p2: tuple[float, float]):
    ux, uy = p2[0] - p1[0], p2[1] - p1[1]

    def f(p: tuple[float, float]) -> float:
        return ux * (p[1] - p1[1]) - uy * (p[0] - p1[0])

    return f


def _clip_halfplane(
    poly: list[tuple[float, float]], f, keep_positive: bool
) -> list[tuple[float, float]]:
    sign = 1.0 if keep_positive else -1.0
    out: list[tuple[float, float]] = []
    n = len(poly)
    for i in range(n):
        cur = poly[i]
        nxt = poly[(i + 1) % n]
        fc = sign * f(cur)
        fn = sign * f(nxt)
        if fc >= 0.0:
            out.append(cur)
        if (fc > 0.0 > fn) or (fc < 0.0 < fn):
            t = fc / (fc - fn)
            out.append((cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])))
    return out


def court_polygon(
    top: BoundaryLine,
    bottom: BoundaryLine,
    baseline: Optional[BoundaryLine],
    width: float,
    height: float,
) -> CourtPolygon:
    """Clip the frame to the court side of each boundary.

    The court lies below the top sideline, above the bottom sideline,
    and on the baseline side holding the farther of the two lateral
    border midpoints (ties resolve to the left midpoint).  Without a
    baseline the area is the open-ended band between the sidelines.

    Raises:
        EmptyPolygon: fewer than 3 vertices or vanishing area remain.
    """
    poly: list[tuple[float, float]] = [
        (0.0, 0.0),
        (width, 0.0),
        (width, height),
        (0.0, height),
    ]
    f_top = _line_fn(top.p1, top.p2)
    mid_top = ((top.p1[0] + top.p2[0]) / 2.0, (top.p1[1] + top.p2[1]) / 2.0)
    poly = _clip_halfplane(poly, f_top, f_top((mid_top[0], mid_top[1] + 1.0)) > 0)
    f_bot = _line_fn(bottom.p1, bottom.p2)
    mid_bot = ((bottom.p1[0] + bottom.p2[0]) / 2.0, (bottom.p1[1] + bottom.p2[1]) / 2.0)
    poly = _clip_halfplane(poly, f_bot, f_bot((mid_bot[0], mid_bot[1] - 1.0)) > 0)
    if baseline is not None:
        f_base = _line_fn(baseline.p1, baseline.p2)
        left = (0.0, height / 2.0)
        right = (width, height / 2.0)
        ref = right if abs(f_base(right)) > abs(f_base(left)) else left
        poly = _clip_halfplane(poly, f_base, f_base(ref) > 0)
    if len(poly) < 3:
        raise EmptyPolygon(f"{len(poly)} vertices left after clipping")
    result = CourtPolygon(vertices=tuple(poly))
    if result.area < 1e-6:
        raise EmptyPolygon(f"clipped area {result.area} is degenerate")
    return result


def filter_by_court(
    detections: Seq[Detection], polygon: CourtPolygon
) -> list[Detection]:
    """Keep detections standing on the court.

    A detection counts as on-court when its box's bottom-center point
    (where the feet meet the floor) lies inside the polygon; the
    boundary itself is inclusive.
    """
    return [det for det in detections if polygon.contains(det.bbox.bottom_center)]
