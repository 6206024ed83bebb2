"""Homographies and camera-motion compensation.

Each frame pair (i, i+1) carries a 3x3 projective transform mapping the
coordinates of a static scene point in frame i to its coordinates in
frame i+1.  Composing the inverses cumulatively re-expresses every frame
in the coordinate system of frame 0, which shrinks the frame-to-frame
displacement of standing players to nearly zero and makes the geometric
association cost meaningful under a panning camera.

Matrices are stored scaled to unit Frobenius norm with a canonical sign
(largest-magnitude entry positive) so equal transforms compare equal and
serialised files are reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence as TypingSequence

import numpy as np

from .model import Detection, Keypoint, Sequence

logger = logging.getLogger(__name__)

__all__ = [
    "Homography",
    "StabilizedSequence",
    "RansacResult",
    "PointAtInfinity",
    "SingularTransform",
    "DegenerateConfiguration",
    "apply",
    "apply_many",
    "compose",
    "invert",
    "estimate_dlt",
    "estimate_ransac",
    "stabilize",
]

# Homogeneous w below this magnitude counts as a point at infinity
# (matrices are unit-norm, so the scale of w is bounded).
_W_EPS = 1e-12
_DET_EPS = 1e-12


class PointAtInfinity(ArithmeticError):
    """Projective image of the point has no finite representative."""


class SingularTransform(ValueError):
    """Matrix is not invertible."""


class DegenerateConfiguration(ValueError):
    """Point correspondences do not determine a homography."""


def _canonicalize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"homography must be 3x3, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("homography has non-finite entries")
    fro = float(np.linalg.norm(m))
    if fro == 0.0:
        raise SingularTransform("zero matrix")
    m = m / fro
    flat = m.ravel()
    lead = flat[np.argmax(np.abs(flat))]
    if lead < 0.0:
        m = -m
    return m


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective transform in canonical (unit Frobenius norm) form."""

    matrix: np.ndarray

    @staticmethod
    def from_matrix(m) -> "Homography":
        return Homography(_canonicalize(m))

    @staticmethod
    def identity() -> "Homography":
        return Homography.from_matrix(np.eye(3))

    @staticmethod
    def translation(tx: float, ty: float) -> "Homography":
        m = np.eye(3)
        m[0, 2] = tx
        m[1, 2] = ty
        return Homography.from_matrix(m)

    def is_close(self, other: "Homography", tol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, atol=tol))

    @property
    def is_identity(self) -> bool:
        """True when the projective action is exactly the identity.

        Any scalar multiple of the identity matrix acts as the identity;
        the check is exact so that stabilizing with identity homographies
        leaves coordinates bit-identical.
        """
        m = self.matrix
        off = (m[0, 1] == 0.0 and m[0, 2] == 0.0 and m[1, 0] == 0.0
               and m[1, 2] == 0.0 and m[2, 0] == 0.0 and m[2, 1] == 0.0)
        return off and m[0, 0] == m[1, 1] == m[2, 2] and m[0, 0] != 0.0


def apply(h: Homography, p: tuple[float, float]) -> tuple[float, float]:
    """Transform one point, with projective division.

    Raises:
        PointAtInfinity: when the homogeneous w coordinate vanishes.
    """
    if h.is_identity:
        return (float(p[0]), float(p[1]))
    v = h.matrix @ np.array([p[0], p[1], 1.0])
    if abs(v[2]) < _W_EPS:
        raise PointAtInfinity(f"point {p} maps to infinity")
    return (float(v[0] / v[2]), float(v[1] / v[2]))


def apply_many(h: Homography, pts: np.ndarray) -> np.ndarray:
    """Transform an (N, 2) array of points in one shot."""
    pts = np.asarray(pts, dtype=np.float64)
    if h.is_identity:
        return pts.copy()
    ones = np.ones((pts.shape[0], 1))
    v = np.hstack([pts, ones]) @ h.matrix.T
    w = v[:, 2]
    if np.any(np.abs(w) < _W_EPS):
        raise PointAtInfinity("some points map to infinity")
    return v[:, :2] / w[:, None]


def compose(a: Homography, b: Homography) -> Homography:
    """Transform equal to applying b first, then a."""
    return Homography.from_matrix(a.matrix @ b.matrix)


def invert(h: Homography) -> Homography:
    if abs(np.linalg.det(h.matrix)) < _DET_EPS:
        raise SingularTransform("determinant too close to zero")
    return Homography.from_matrix(np.linalg.inv(h.matrix))


def _collinearity(pts: np.ndarray) -> float:
    """Smallest triangle area (x2) over all point triples; 0 means collinear."""
    n = len(pts)
    best = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = pts[i], pts[j], pts[k]
                area2 = abs(
                    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
                )
                best = min(best, area2)
    return float(best)


def _hartley_normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity transform centering the points with mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    dists = np.linalg.norm(pts - centroid, axis=1)
    mean_dist = dists.mean()
    if mean_dist < 1e-12:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / mean_dist
    t = np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return t


def estimate_dlt(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Least-squares homography from point pairs (normalized DLT).

    Args:
        src: (N, 2) source points, N >= 4.
        dst: (N, 2) matching destination points.

    Returns:
        Homography minimizing the algebraic error, exact for exact data.

    Raises:
        DegenerateConfiguration: fewer than 4 pairs, collinear minimal
            sets, or a rank-deficient system.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must both be (N, 2)")
    n = src.shape[0]
    if n < 4:
        raise DegenerateConfiguration(f"need >= 4 pairs, got {n}")
    if n == 4 and (_collinearity(src) < 1e-9 or _collinearity(dst) < 1e-9):
        raise DegenerateConfiguration("3 of the 4 points are collinear")

    t1 = _hartley_normalization(src)
    t2 = _hartley_normalization(dst)
    sh = (np.hstack([src, np.ones((n, 1))]) @ t1.T)
    dh = (np.hstack([dst, np.ones((n, 1))]) @ t2.T)

    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y, _ = sh[i]
        u, v, _ = dh[i]
        a[2 * i] = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]
        a[2 * i + 1] = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]

    _, s, vt = np.linalg.svd(a)
    # Two near-zero singular values mean the solution is not unique.
    if len(s) >= 8 and s[7] < 1e-10 * max(s[0], 1.0):
        raise DegenerateConfiguration("correspondences do not constrain the transform")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t2) @ h_norm @ t1
    if not np.all(np.isfinite(h)) or abs(np.linalg.det(h)) < 1e-14:
        raise DegenerateConfiguration("estimated matrix is singular")
    return Homography.from_matrix(h)


def _reprojection_errors(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    try:
        proj = apply_many(h, src)
    except PointAtInfinity:
        return np.full(len(src), np.inf)
    return np.linalg.norm(proj - dst, axis=1)


@dataclass(frozen=True, eq=False)
class RansacResult:
    """Estimated transform plus the per-pair inlier mask.

    ``reliable`` is False when no more than a minimal sample's worth of
    pairs ended up as inliers, i.e. the consensus carries no evidence.
    """

    homography: Homography
    inliers: np.ndarray
    reliable: bool

    def __iter__(self):
        return iter((self.homography, self.inliers))


def estimate_ransac(
    src: np.ndarray,
    dst: np.ndarray,
    inlier_tol: float = 2.0,
    iterations: int = 200,
    seed: int = 0,
) -> RansacResult:
    """Robust homography fit over contaminated correspondences.

    Samples minimal 4-point sets with a seeded generator, keeps the model
    with the largest consensus (ties broken by lower total inlier error),
    then refits on the final inlier set.

    Raises:
        DegenerateConfiguration: fewer than 4 pairs, or no sampled set
            produced a valid model.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = src.shape[0]
    if n < 4:
        raise DegenerateConfiguration(f"need >= 4 pairs, got {n}")
    rng = np.random.default_rng(seed)

    best_h: Homography | None = None
    best_count = -1
    best_err = np.inf
    for _ in range(iterations):
        idx = rng.choice(n, size=4, replace=False)
        try:
            h = estimate_dlt(src[idx], dst[idx])
        except DegenerateConfiguration:
            continue
        errors = _reprojection_errors(h, src, dst)
        mask = errors <= inlier_tol
        count = int(mask.sum())
        err = float(errors[mask].sum())
        if count > best_count or (count == best_count and err < best_err):
            best_h, best_count, best_err = h, count, err

    if best_h is None:
        raise DegenerateConfiguration("no valid minimal sample found")

    h = best_h
    mask = _reprojection_errors(h, src, dst) <= inlier_tol
    if mask.sum() >= 4:
        try:
            refit = estimate_dlt(src[mask], dst[mask])
            h = refit
        except DegenerateConfiguration:
            pass  # keep the minimal-sample model
    mask = _reprojection_errors(h, src, dst) <= inlier_tol
    reliable = int(mask.sum()) > 4
    if not reliable:
        logger.warning(
            "ransac consensus holds only %d pairs; estimate is unreliable", int(mask.sum())
        )
    return RansacResult(homography=h, inliers=mask, reliable=reliable)


@dataclass
class StabilizedSequence:
    """A sequence re-expressed in frame 0 coordinates.

    Attributes:
        original: The untouched input sequence.
        stabilized: Same structure with every keypoint transformed.
        to_reference: frame_id -> Homography mapping that frame's
            coordinates into frame 0's; frame 0 maps by the identity.
    """

    original: Sequence
    stabilized: Sequence
    to_reference: dict[int, Homography]


def _transform_detection(det: Detection, h: Homography) -> Detection:
    pts = np.array([[kp.x, kp.y] for kp in det.keypoints])
    moved = apply_many(h, pts)
    kps = []
    for kp, (x, y) in zip(det.keypoints, moved):
        if kp.present:
            kps.append(Keypoint(float(x), float(y), kp.conf, True))
        else:
            kps.append(kp)
    return det.with_keypoints(kps)


def stabilize(
    seq: Sequence,
    frame_pair_homographies,
) -> StabilizedSequence:
    """Map every frame of a sequence into frame 0 coordinates.

    Args:
        seq: Input sequence.
        frame_pair_homographies: consecutive-frame homographies mapping
            frame_from coordinates to frame_to, either as a mapping
            {(frame_from, frame_to): H} or as (frame_from, frame_to, H)
            triples; H is a Homography, 9 row-major reals, or a 3x3
            array.

    Raises:
        ValueError: when a consecutive pair has no homography.
        SingularTransform: propagated from inversion.
    """
    if isinstance(frame_pair_homographies, Mapping):
        items = [(a, b, h) for (a, b), h in frame_pair_homographies.items()]
    else:
        items = list(frame_pair_homographies)
    pair_map: dict[tuple[int, int], Homography] = {}
    for frame_from, frame_to, h in items:
        if not isinstance(h, Homography):
            h = Homography.from_matrix(np.asarray(h, dtype=np.float64).reshape(3, 3))
        pair_map[(frame_from, frame_to)] = h

    frame_ids = seq.frame_ids
    to_reference: dict[int, Homography] = {}
    current = Homography.identity()
    for i, fid in enumerate(frame_ids):
        if i > 0:
            key = (frame_ids[i - 1], fid)
            if key not in pair_map:
                raise ValueError(f"missing homography for frame pair {key}")
            current = compose(current, invert(pair_map[key]))
        to_reference[fid] = current

    detections = {
        fid: [_transform_detection(d, to_reference[fid]) for d in seq.frame_detections(fid)]
        for fid in frame_ids
    }
    stabilized = Sequence(
        frames=list(seq.frames), detections=detections, fps_effective=seq.fps_effective
    )
    return StabilizedSequence(original=seq, stabilized=stabilized, to_reference=to_reference)
