"""Binary storage for per-part feature vectors (PFV1 format).

One file holds the sampled cell vectors of a single detection.  Layout,
little-endian throughout:

    magic   4 bytes  b"PFV1"
    layer   4 bytes  ASCII layer name ("b2c2" .. "b5c2")
    u32     channel count
    u32     entry count
    entry*  u8 part id, u16 cell x, u16 cell y, channels x f32

Entries are written sorted by (part, cell x, cell y), which makes the
bytes a pure function of the content.  Vectors are stored float32 and
come back float64; writers must hand in unit-norm vectors.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .features import LAYERS, PartFeatureSet
from .model import NUM_PARTS

__all__ = ["FormatError", "read_features", "write_features", "attach_features"]

_MAGIC = b"PFV1"
_HEADER = struct.Struct("<4s4sII")
_ENTRY_HEAD = struct.Struct("<BHH")


class FormatError(ValueError):
    """A feature file violates the PFV1 layout or its invariants."""


def write_features(path: Union[str, Path], pfs: PartFeatureSet) -> None:
    """Serialize a part feature set; bytes depend only on the content."""
    chunks = [
        _HEADER.pack(
            _MAGIC,
            pfs.layer.name.encode("ascii"),
            pfs.channels,
            sum(len(m) for m in pfs.cells.values()),
        )
    ]
    for part_id in sorted(pfs.cells):
        cellmap = pfs.cells[part_id]
        for (cx, cy) in sorted(cellmap):
            chunks.append(_ENTRY_HEAD.pack(part_id, cx, cy))
            chunks.append(
                np.ascontiguousarray(cellmap[(cx, cy)], dtype="<f4").tobytes()
            )
    Path(path).write_bytes(b"".join(chunks))


def read_features(path: Union[str, Path]) -> PartFeatureSet:
    """Parse a PFV1 file, validating structure and vector norms."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, layer_raw, channels, count = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    try:
        layer_name = layer_raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: unreadable layer name") from exc
    if layer_name not in LAYERS:
        raise FormatError(f"{path}: unknown layer {layer_name!r}")
    layer = LAYERS[layer_name]
    entry_size = _ENTRY_HEAD.size + 4 * channels
    expected = _HEADER.size + count * entry_size
    if len(data) != expected:
        raise FormatError(
            f"{path}: size {len(data)} does not match {count} entries "
            f"of {entry_size} bytes"
        )
    cells: dict[int, dict[tuple[int, int], np.ndarray]] = {}
    offset = _HEADER.size
    for _ in range(count):
        part_id, cx, cy = _ENTRY_HEAD.unpack_from(data, offset)
        offset += _ENTRY_HEAD.size
        vec = np.frombuffer(data, dtype="<f4", count=channels, offset=offset).astype(
            np.float64
        )
        offset += 4 * channels
        if part_id >= NUM_PARTS:
            raise FormatError(f"{path}: part id {part_id} out of range")
        cellmap = cells.setdefault(part_id, {})
        if (cx, cy) in cellmap:
            raise FormatError(f"{path}: duplicate entry part {part_id} cell ({cx},{cy})")
        cellmap[(cx, cy)] = vec
    try:
        return PartFeatureSet(layer=layer, channels=channels, cells=cells)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def attach_features(seq, features_dir: Union[str, Path]):
    """Load each detection's referenced feature file into the sequence.

    Detections without a feat_ref are left untouched.  Returns a new
    sequence of the same shape.
    """
    from .model import Sequence

    features_dir = Path(features_dir)
    detections = {}
    for frame_id, dets in seq.detections.items():
        loaded = []
        for det in dets:
            if det.feat_ref is None:
                loaded.append(det)
            else:
                loaded.append(det.with_features(read_features(features_dir / det.feat_ref)))
        detections[frame_id] = loaded
    return Sequence(
        frames=seq.frames, detections=detections, fps_effective=seq.fps_effective
    )
