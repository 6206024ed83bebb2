"""File formats for sequences, tracks, and homographies.

Three interchange formats, all line oriented so fixtures diff cleanly:

* detections: JSON lines ``{"frame": int, "det": int, "kp": [[x, y, conf],
  ...25 entries, null for absent parts], "feat_ref": optional str}``
* frame metadata: JSON lines ``{"frame": int, "w": int, "h": int,
  "image": optional path}``
* tracks and ground truth: CSV ``frame,track_id,x_min,y_min,width,height``
* homographies: JSON lines ``{"frame_from": i, "frame_to": i+1,
  "H": [9 row-major reals]}``

Floats are serialised with repr precision, so write-then-read restores
values bit exactly.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Optional

from .model import NUM_PARTS, BoundingBox, Detection, FrameMeta, Keypoint, Sequence

logger = logging.getLogger(__name__)

__all__ = [
    "ParseError",
    "load_sequence",
    "save_sequence",
    "load_tracks_csv",
    "save_tracks",
    "load_homographies",
    "save_homographies",
    "assignments_to_rows",
]


class ParseError(ValueError):
    """Malformed fixture file; carries path and line number."""

    def __init__(self, path: str | Path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


def _json_lines(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON ({exc.msg})") from exc


def _parse_keypoints(obj, path, line_no) -> tuple[Keypoint, ...]:
    if not isinstance(obj, list) or len(obj) != NUM_PARTS:
        raise ParseError(path, line_no, f"'kp' must list {NUM_PARTS} entries")
    kps = []
    for k, entry in enumerate(obj):
        if entry is None:
            kps.append(Keypoint.absent())
            continue
        if not isinstance(entry, list) or len(entry) != 3:
            raise ParseError(path, line_no, f"keypoint {k} must be [x, y, conf] or null")
        x, y, conf = entry
        if not all(isinstance(v, (int, float)) for v in (x, y, conf)):
            raise ParseError(path, line_no, f"keypoint {k} has non-numeric fields")
        if not 0.0 <= conf <= 1.0:
            raise ParseError(path, line_no, f"keypoint {k} confidence {conf} outside [0, 1]")
        kps.append(Keypoint(float(x), float(y), float(conf)))
    return tuple(kps)


def load_sequence(
    detections_path: str | Path,
    frames_path: str | Path,
    fps_effective: float = 4.0,
) -> Sequence:
    """Load a sequence from a detections file plus its frame metadata file.

    Frames listed in the metadata file but absent from the detections file
    come back with an empty detection list.  A detection referring to a
    frame the metadata file does not know is an error.

    Raises:
        ParseError: on malformed lines, duplicate ids, or unknown frames.
    """
    frames: list[FrameMeta] = []
    seen_frames: set[int] = set()
    for line_no, obj in _json_lines(frames_path):
        try:
            meta = FrameMeta(
                frame_id=int(obj["frame"]),
                width=int(obj["w"]),
                height=int(obj["h"]),
                image=obj.get("image"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(frames_path, line_no, f"bad frame record: {exc}") from exc
        if meta.frame_id in seen_frames:
            raise ParseError(frames_path, line_no, f"duplicate frame id {meta.frame_id}")
        seen_frames.add(meta.frame_id)
        frames.append(meta)
    frames.sort(key=lambda f: f.frame_id)

    detections: dict[int, list[Detection]] = {f.frame_id: [] for f in frames}
    for line_no, obj in _json_lines(detections_path):
        try:
            frame_id = int(obj["frame"])
            det_id = int(obj["det"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(detections_path, line_no, f"bad detection record: {exc}") from exc
        if frame_id not in detections:
            raise ParseError(
                detections_path, line_no, f"frame {frame_id} missing from metadata file"
            )
        kps = _parse_keypoints(obj.get("kp"), detections_path, line_no)
        det = Detection(
            frame_id=frame_id,
            det_id=det_id,
            keypoints=kps,
            feat_ref=obj.get("feat_ref"),
        )
        if any(d.det_id == det_id for d in detections[frame_id]):
            raise ParseError(
                detections_path, line_no, f"frame {frame_id}: duplicate det id {det_id}"
            )
        detections[frame_id].append(det)

    return Sequence(frames=frames, detections=detections, fps_effective=fps_effective)


def save_sequence(
    seq: Sequence,
    detections_path: str | Path,
    frames_path: str | Path,
) -> None:
    """Write a sequence back out in the two-file wire format."""
    with open(frames_path, "w", encoding="utf-8") as fh:
        for meta in seq.frames:
            obj: dict = {"frame": meta.frame_id, "w": meta.width, "h": meta.height}
            if meta.image is not None:
                obj["image"] = meta.image
            fh.write(json.dumps(obj) + "\n")
    with open(detections_path, "w", encoding="utf-8") as fh:
        for meta in seq.frames:
            for det in seq.frame_detections(meta.frame_id):
                kp = [
                    [k.x, k.y, k.conf] if k.present else None
                    for k in det.keypoints
                ]
                obj = {"frame": det.frame_id, "det": det.det_id, "kp": kp}
                if det.feat_ref is not None:
                    obj["feat_ref"] = det.feat_ref
                fh.write(json.dumps(obj) + "\n")


_TRACK_HEADER = ["frame", "track_id", "x_min", "y_min", "width", "height"]


def save_tracks(path: str | Path, rows: Iterable[tuple[int, int, BoundingBox]]) -> None:
    """Write tracker output rows (frame, track id, box) as CSV."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TRACK_HEADER)
        for frame_id, track_id, box in rows:
            writer.writerow(
                [frame_id, track_id, repr(box.x_min), repr(box.y_min),
                 repr(box.width), repr(box.height)]
            )


def load_tracks_csv(path: str | Path) -> dict[int, list[tuple[int, BoundingBox]]]:
    """Read a tracks or ground truth CSV into frame -> [(id, box)] lists."""
    out: dict[int, list[tuple[int, BoundingBox]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if line_no == 1 and row[0].strip().lower() == "frame":
                continue
            if len(row) != 6:
                raise ParseError(path, line_no, f"expected 6 columns, got {len(row)}")
            try:
                frame_id = int(row[0])
                track_id = int(row[1])
                x_min, y_min, w, h = (float(v) for v in row[2:])
            except ValueError as exc:
                raise ParseError(path, line_no, f"bad numeric field: {exc}") from exc
            if w < 0 or h < 0:
                raise ParseError(path, line_no, "negative box size")
            box = BoundingBox(x_min, y_min, x_min + w, y_min + h)
            out.setdefault(frame_id, []).append((track_id, box))
    return out


def assignments_to_rows(
    seq: Sequence,
    assignments: Iterable[tuple[int, int, int]],
) -> list[tuple[int, int, BoundingBox]]:
    """Join (frame, det, track) triples with the sequence's derived boxes."""
    by_frame: dict[int, dict[int, Detection]] = {}
    for meta in seq.frames:
        by_frame[meta.frame_id] = {d.det_id: d for d in seq.frame_detections(meta.frame_id)}
    rows = []
    for frame_id, det_id, track_id in assignments:
        det = by_frame[frame_id][det_id]
        rows.append((frame_id, track_id, det.bbox))
    return rows


def save_homographies(path: str | Path, pairs: Iterable[tuple[int, int, "object"]]) -> None:
    """Write consecutive-frame homographies as JSON lines.

    Each item is (frame_from, frame_to, H) where H is a Homography or any
    object exposing a 3x3 ``matrix`` attribute.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for frame_from, frame_to, h in pairs:
            mat = getattr(h, "matrix", h)
            flat = [float(v) for row in mat for v in row]
            fh.write(
                json.dumps({"frame_from": frame_from, "frame_to": frame_to, "H": flat}) + "\n"
            )


def load_homographies(path: str | Path) -> list[tuple[int, int, list[float]]]:
    """Read the homography file back as (frame_from, frame_to, 9 floats)."""
    out = []
    for line_no, obj in _json_lines(path):
        try:
            frame_from = int(obj["frame_from"])
            frame_to = int(obj["frame_to"])
            flat = [float(v) for v in obj["H"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, line_no, f"bad homography record: {exc}") from exc
        if len(flat) != 9:
            raise ParseError(path, line_no, f"'H' must hold 9 reals, got {len(flat)}")
        out.append((frame_from, frame_to, flat))
    return out
