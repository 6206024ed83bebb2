"""Export pipeline: frames in, tracker-ready files out.

For every sampled frame we detect people (or take their keypoints from a
precomputed file), cut a square crop per person, push it through the
backbone once, and store the activation vectors for each part's grid
cells.  The output directory then holds everything the tracker's CLI
needs: frames.jsonl, detections.jsonl and features/*.pfv.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import cv2
import numpy as np

from . import models
from .gridmap import (
    CROP_SIZE,
    LAYER_GRIDS,
    cells_for_point,
    extract_crop,
    person_crop,
)
from .pfv import write_features

__all__ = [
    "ExportError",
    "ExportJob",
    "ExportReport",
    "iter_frames",
    "load_keypoint_file",
    "export",
]

IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp"}

PoseFn = Callable[[np.ndarray], List[np.ndarray]]
# frame id -> ordered (det id, (25, 3) keypoints) pairs
KeypointTable = Dict[int, List[Tuple[int, np.ndarray]]]


class ExportError(RuntimeError):
    """Unrecoverable input problem: bad source, bad job, mismatched model."""


@dataclass(frozen=True)
class ExportJob:
    """Everything one export run needs.

    source is a video file or a directory of images (sorted by name).
    fps only applies to videos: frames are decimated so roughly that
    many survive per second of footage.
    """

    source: Path
    out_dir: Path
    layer: str = "b4c2"
    neighborhood: int = 2
    fps: float = 4.0
    min_conf: float = 0.0
    crop_size: int = CROP_SIZE
    interpolation: str = "bilinear"
    keypoints_path: Optional[Path] = None
    pretrained: bool = True
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.layer not in LAYER_GRIDS:
            raise ExportError(f"unknown layer {self.layer!r}")
        if self.neighborhood not in (1, 2, 3):
            raise ExportError(f"neighborhood must be 1, 2 or 3, got {self.neighborhood}")
        if self.fps <= 0:
            raise ExportError(f"fps must be positive, got {self.fps}")
        if self.crop_size <= 0:
            raise ExportError(f"crop size must be positive, got {self.crop_size}")


@dataclass
class ExportReport:
    frames: int = 0
    detections: int = 0
    features_written: int = 0
    errors: List[Tuple[int, str]] = field(default_factory=list)


def iter_frames(source: Path, fps: float) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield (sampled index, BGR image) from a video or image directory.

    Directory sources ignore fps; videos keep every k-th frame where k
    approximates native_fps / fps.  Sampled indices are consecutive from
    zero and become the frame ids in every output file.
    """
    if source.is_dir():
        paths = sorted(
            p for p in source.iterdir() if p.suffix.lower() in IMAGE_EXTS
        )
        if not paths:
            raise ExportError(f"no images in {source}")
        for idx, path in enumerate(paths):
            image = cv2.imread(str(path))
            if image is None:
                raise ExportError(f"unreadable image {path}")
            yield idx, image
        return
    if not source.exists():
        raise ExportError(f"no such input: {source}")
    cap = cv2.VideoCapture(str(source))
    if not cap.isOpened():
        raise ExportError(f"cannot open video {source}")
    try:
        native = cap.get(cv2.CAP_PROP_FPS)
        step = max(1, round(native / fps)) if native and native > 0 else 1
        raw = 0
        out = 0
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            if raw % step == 0:
                yield out, frame
                out += 1
            raw += 1
    finally:
        cap.release()


def load_keypoint_file(path: Path) -> KeypointTable:
    """Read precomputed keypoints from detections-format JSONL.

    Each line holds {"frame", "det", "kp"} where kp lists 25 entries,
    each [x, y, conf] or null.  Extra keys are ignored so a previously
    exported detections.jsonl works as input directly.
    """
    table: KeypointTable = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                frame_id = int(obj["frame"])
                det_id = int(obj["det"])
                kp = obj["kp"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ExportError(f"{path}:{line_no}: bad keypoint record ({exc})")
            if not isinstance(kp, list) or len(kp) != models.NUM_PARTS:
                raise ExportError(
                    f"{path}:{line_no}: 'kp' must list {models.NUM_PARTS} entries"
                )
            parts = np.full((models.NUM_PARTS, 3), np.nan)
            for part_id, entry in enumerate(kp):
                if entry is None:
                    continue
                if len(entry) != 3:
                    raise ExportError(
                        f"{path}:{line_no}: keypoint {part_id} must be [x, y, conf]"
                    )
                parts[part_id] = [float(v) for v in entry]
            dets = table.setdefault(frame_id, [])
            if any(existing == det_id for existing, _ in dets):
                raise ExportError(
                    f"{path}:{line_no}: frame {frame_id} repeats det id {det_id}"
                )
            dets.append((det_id, parts))
    for dets in table.values():
        dets.sort(key=lambda item: item[0])
    return table


def _kp_json(parts: np.ndarray) -> List[Optional[List[float]]]:
    out: List[Optional[List[float]]] = []
    for x, y, conf in parts:
        if math.isnan(x) or math.isnan(y):
            out.append(None)
        else:
            out.append([float(x), float(y), float(min(max(conf, 0.0), 1.0))])
    return out


def _atomic_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _detection_features(
    job: ExportJob,
    trunk,
    image: np.ndarray,
    parts: np.ndarray,
    grid: int,
):
    """Sample and normalize the activation vectors for one person.

    Returns (entries, channels).  Cells whose activation is all zero are
    dropped; they cannot be normalized and carry no signal anyway.
    """
    crop_box = person_crop(parts)
    if crop_box is None:
        return None
    crop = extract_crop(image, crop_box, job.crop_size, job.interpolation)
    act = models.run_backbone(trunk, crop)
    if act.ndim != 3 or act.shape[1] != grid or act.shape[2] != grid:
        raise ExportError(
            f"backbone produced {act.shape[1]}x{act.shape[2]} maps for layer "
            f"{job.layer} (want {grid}x{grid})"
        )
    channels = act.shape[0]
    entries = {}
    for part_id, (x, y, conf) in enumerate(parts):
        if math.isnan(x) or math.isnan(y) or conf < job.min_conf:
            continue
        for cx, cy in cells_for_point(x, y, crop_box, grid, job.neighborhood):
            vec = act[:, cy, cx].astype(np.float64)
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                continue
            entries[(part_id, (cx, cy))] = (vec / norm).astype(np.float32)
    return entries, channels


def export(
    job: ExportJob,
    pose_fn: Optional[PoseFn] = None,
    backbone=None,
) -> ExportReport:
    """Run the pipeline and write the output directory.

    A frame that fails (decode problem, model error on that image) is
    reported and skipped as a whole: it appears in neither frames.jsonl
    nor detections.jsonl, so consumers never see a half-written frame.
    Raises ExportError or ModelLoadError only for faults that void the
    entire job.
    """
    out_dir = Path(job.out_dir)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)

    keypoint_table: Optional[KeypointTable] = None
    if job.keypoints_path is not None:
        keypoint_table = load_keypoint_file(Path(job.keypoints_path))
        pose_desc = "precomputed"
    elif pose_fn is None:
        pose_fn = models.load_pose_estimator(device=job.device)
        pose_desc = "keypoint-rcnn"
    else:
        pose_desc = "custom"
    if backbone is None:
        backbone = models.load_backbone(
            job.layer, pretrained=job.pretrained, seed=job.seed, device=job.device
        )
        backbone_desc = (
            "vgg19-imagenet" if job.pretrained else f"vgg19-random-seed{job.seed}"
        )
    else:
        backbone_desc = "custom"

    grid = LAYER_GRIDS[job.layer]
    report = ExportReport()
    frame_lines: List[str] = []
    det_lines: List[str] = []

    for frame_id, image in iter_frames(Path(job.source), job.fps):
        try:
            if keypoint_table is not None:
                people = keypoint_table.get(frame_id, [])
            else:
                people = [(i, parts) for i, parts in enumerate(pose_fn(image))]
            rows = []
            for det_id, parts in people:
                sampled = _detection_features(job, backbone, image, parts, grid)
                if sampled is None:
                    continue  # no present part, nothing to anchor a crop on
                entries, channels = sampled
                ref = f"{frame_id:04d}_{det_id:02d}.pfv"
                write_features(features_dir / ref, job.layer, channels, entries)
                rows.append(
                    json.dumps(
                        {
                            "frame": frame_id,
                            "det": det_id,
                            "kp": _kp_json(parts),
                            "feat_ref": ref,
                        }
                    )
                )
                report.features_written += 1
        except Exception as exc:  # noqa: BLE001  isolate faults per frame
            report.errors.append((frame_id, str(exc)))
            continue
        height, width = image.shape[:2]
        frame_lines.append(
            json.dumps({"frame": frame_id, "w": int(width), "h": int(height)})
        )
        det_lines.extend(rows)
        report.frames += 1
        report.detections += len(rows)

    if report.frames == 0:
        raise ExportError("no frame survived the export")

    _atomic_text(out_dir / "frames.jsonl", "".join(line + "\n" for line in frame_lines))
    _atomic_text(
        out_dir / "detections.jsonl", "".join(line + "\n" for line in det_lines)
    )
    meta = {
        "layer": job.layer,
        "grid": grid,
        "neighborhood": job.neighborhood,
        "crop_size": job.crop_size,
        "interpolation": job.interpolation,
        "fps": job.fps,
        "source": str(job.source),
        "pose": pose_desc,
        "backbone": backbone_desc,
        "frames": report.frames,
        "detections": report.detections,
        "errors": [{"frame": f, "message": m} for f, m in report.errors],
    }
    _atomic_text(out_dir / "export_meta.json", json.dumps(meta, indent=2) + "\n")
    return report
