"""RVF raw-volume files, the on-disk interchange format used project-wide.

Layout: magic ``RVF1``, little-endian u32 dims (x, y, z), f32 spacing,
f32 origin, u32 channel count, then one f32 block per channel holding
dims-product values, row-major with x fastest. Masks store 0.0/1.0.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .volume import BinaryMask, Volume3

MAGIC = b"RVF1"
_HEADER = struct.Struct("<4s3I3f3f I")


def write_rvf(path, channels: list) -> None:
    """Write volumes (or masks) sharing one grid as channels of one file."""
    if not channels:
        raise ValueError("need at least one channel")
    first = channels[0]
    for ch in channels[1:]:
        if ch.dims != first.dims or not np.allclose(
            ch.spacing, first.spacing, atol=1e-9
        ) or not np.allclose(ch.origin, first.origin, atol=1e-9):
            raise ValueError("channels must share one grid")
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MAGIC,
                *first.dims,
                *(np.float32(s) for s in first.spacing),
                *(np.float32(o) for o in first.origin),
                len(channels),
            )
        )
        for ch in channels:
            data = np.asarray(ch.data, dtype=np.float64)
            fh.write(data.astype("<f4").ravel(order="F").tobytes())


def read_rvf(path) -> list[Volume3]:
    """Read all channels of an RVF file as float64 volumes."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated RVF header")
    fields = _HEADER.unpack_from(raw)
    if fields[0] != MAGIC:
        raise ValueError(f"{path}: bad magic {fields[0]!r}")
    dims = fields[1:4]
    spacing = fields[4:7]
    origin = fields[7:10]
    n_channels = fields[10]
    count = int(np.prod(dims))
    expected = _HEADER.size + 4 * count * n_channels
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(raw)}")
    out = []
    offset = _HEADER.size
    for _ in range(n_channels):
        flat = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        data = flat.astype(np.float64).reshape(dims, order="F")
        out.append(Volume3(dims, spacing, origin, data))
    return out


def volume_to_mask(vol: Volume3, threshold: float = 0.5) -> BinaryMask:
    return BinaryMask(vol.dims, vol.spacing, vol.origin, vol.data >= threshold)
