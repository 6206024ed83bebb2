"""Binary part-feature files (.pfv).

Layout, all little-endian:

    magic b"PFV1" | layer name, 4 ascii bytes | channels u32 | count u32
    then per entry: part u8 | cell x u16 | cell y u16 | channels * f32

Entries are sorted by (part, cx, cy) so identical content always yields
identical bytes.  Vectors must arrive unit length; the reader on the
other side rejects anything off by more than 1e-4.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from .gridmap import LAYER_GRIDS

__all__ = ["FormatError", "write_features", "read_features"]

MAGIC = b"PFV1"
_HEADER = struct.Struct("<4s4sII")
_ENTRY_HEAD = struct.Struct("<BHH")

NUM_PARTS = 25
_NORM_TOL = 1e-5

FeatureMap = Dict[Tuple[int, Tuple[int, int]], np.ndarray]


class FormatError(ValueError):
    """A .pfv file (or candidate content) violates the layout above."""


def write_features(
    path: Union[str, Path], layer: str, channels: int, entries: FeatureMap
) -> None:
    """Serialize entries atomically; readers never observe a partial file."""
    if layer not in LAYER_GRIDS:
        raise FormatError(f"unknown layer {layer!r}")
    if channels <= 0:
        raise FormatError(f"channels must be positive, got {channels}")
    payload = bytearray(_HEADER.pack(MAGIC, layer.encode("ascii"), channels, len(entries)))
    for part, (cx, cy) in sorted(entries):
        vec = np.asarray(entries[(part, (cx, cy))], dtype="<f4")
        if vec.shape != (channels,):
            raise FormatError(
                f"entry part {part} cell ({cx},{cy}) has {vec.size} values, want {channels}"
            )
        norm = float(np.linalg.norm(vec.astype(np.float64)))
        if abs(norm - 1.0) > _NORM_TOL:
            raise FormatError(
                f"entry part {part} cell ({cx},{cy}) has norm {norm:.6f}, want 1"
            )
        if not 0 <= part < NUM_PARTS:
            raise FormatError(f"part id {part} out of range")
        payload += _ENTRY_HEAD.pack(part, cx, cy)
        payload += vec.tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def read_features(path: Union[str, Path]) -> Tuple[str, int, FeatureMap]:
    """Parse one file back into (layer, channels, entries).

    Applies the same checks the consumer does, so a file that loads here
    loads there.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, layer_raw, channels, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    try:
        layer = layer_raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: unreadable layer name") from exc
    if layer not in LAYER_GRIDS:
        raise FormatError(f"{path}: unknown layer {layer!r}")
    entry_size = _ENTRY_HEAD.size + 4 * channels
    expected = _HEADER.size + count * entry_size
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} does not match {count} entries")
    entries: FeatureMap = {}
    offset = _HEADER.size
    for _ in range(count):
        part, cx, cy = _ENTRY_HEAD.unpack_from(data, offset)
        offset += _ENTRY_HEAD.size
        if part >= NUM_PARTS:
            raise FormatError(f"{path}: part id {part} out of range")
        key = (part, (cx, cy))
        if key in entries:
            raise FormatError(f"{path}: duplicate entry part {part} cell ({cx},{cy})")
        vec = np.frombuffer(data, dtype="<f4", count=channels, offset=offset).copy()
        offset += 4 * channels
        norm = float(np.linalg.norm(vec.astype(np.float64)))
        if abs(norm - 1.0) > 1e-4:
            raise FormatError(
                f"{path}: part {part} cell ({cx},{cy}) has norm {norm:.6f}"
            )
        entries[key] = vec
    return layer, channels, entries
