"""NSF1 binary field format.

Layout, little-endian throughout: magic ``NSF1`` (4 bytes), u32 nx, u32 ny,
u32 channel_count, u8 dtype tag (0 = f32, 1 = f64), then
``channel_count * ny * nx`` values row-major.  A JSON sidecar (same filename
plus ``.json``) carries the boundary spec and obstacle shape list.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .grid import BoundarySpec, GridSpec, Shape, shape_from_jsonable

MAGIC = b"NSF1"
_HEADER = struct.Struct("<4sIIIB")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class FormatError(ValueError):
    """Malformed NSF1 payload."""


def encode(channels: np.ndarray) -> bytes:
    """Serialize a [C, ny, nx] float array to NSF1 bytes."""
    channels = np.asarray(channels)
    if channels.ndim != 3:
        raise FormatError(f"expected [C, ny, nx], got shape {channels.shape}")
    tag = _TAGS.get(channels.dtype)
    if tag is None:
        raise FormatError(f"unsupported dtype {channels.dtype}")
    c, ny, nx = channels.shape
    header = _HEADER.pack(MAGIC, nx, ny, c, tag)
    body = np.ascontiguousarray(channels, dtype=_DTYPES[tag]).tobytes()
    return header + body


def decode(data: bytes) -> np.ndarray:
    """Parse NSF1 bytes into a [C, ny, nx] array in the stored dtype."""
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, nx, ny, c, tag = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if tag not in _DTYPES:
        raise FormatError(f"unknown dtype tag {tag}")
    dtype = _DTYPES[tag]
    expected = _HEADER.size + c * ny * nx * dtype.itemsize
    if len(data) != expected:
        raise FormatError(f"payload is {len(data)} bytes, expected {expected}")
    body = np.frombuffer(data, dtype=dtype, offset=_HEADER.size)
    return body.reshape(c, ny, nx).copy()


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(str(path) + ".json")


def write_field(
    path: Union[str, Path],
    channels: np.ndarray,
    bc: Optional[BoundarySpec] = None,
    shapes: Sequence[Shape] = (),
) -> None:
    """Write an NSF1 file plus its JSON sidecar."""
    path = Path(path)
    path.write_bytes(encode(channels))
    meta = {"shapes": [s.to_jsonable() for s in shapes]}
    if bc is not None:
        meta["boundary"] = bc.to_jsonable()
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True))


def read_field(path: Union[str, Path]):
    """Read an NSF1 file; returns (channels, bc-or-None, shape list)."""
    path = Path(path)
    channels = decode(path.read_bytes())
    bc, shapes = None, []
    sc = sidecar_path(path)
    if sc.exists():
        meta = json.loads(sc.read_text())
        if "boundary" in meta:
            bc = BoundarySpec.from_jsonable(meta["boundary"])
        shapes = [shape_from_jsonable(d) for d in meta.get("shapes", [])]
    return channels, bc, shapes


def grid_of(channels: np.ndarray, domain_length: float = 1.0) -> GridSpec:
    return GridSpec(nx=channels.shape[2], ny=channels.shape[1], domain_length=domain_length)
