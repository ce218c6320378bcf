"""NLFD binary field files.

Layout (little-endian): magic ``b"NLFD"``, u32 version (1), u32 d,
u32 n[d], f64 spacing[d], u8 components, then f64 samples stored
component-major and row-major within each component.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .geometry import Grid
from .operators import GridField

MAGIC = b"NLFD"
VERSION = 1


def encode(values: np.ndarray, spacing) -> bytes:
    """Serialize samples of shape (components, *n)."""
    values = np.asarray(values, dtype="<f8")
    if values.ndim < 2:
        raise InvalidArgumentError("field samples need shape (components, *n)")
    comps, shape = values.shape[0], values.shape[1:]
    d = len(shape)
    spacing = tuple(float(v) for v in np.broadcast_to(spacing, (d,)))
    if comps > 255:
        raise InvalidArgumentError(f"at most 255 components, got {comps}")
    head = MAGIC + struct.pack(f"<II{d}I{d}dB", VERSION, d, *shape, *spacing, comps)
    return head + np.ascontiguousarray(values).tobytes(order="C")


def decode(data: bytes):
    """Return (values, spacing) from NLFD bytes."""
    if data[:4] != MAGIC:
        raise InvalidArgumentError("not an NLFD file (bad magic)")
    version, d = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise InvalidArgumentError(f"unsupported NLFD version {version}")
    if d < 1:
        raise InvalidArgumentError(f"invalid dimension {d}")
    off = 12
    shape = struct.unpack_from(f"<{d}I", data, off)
    off += 4 * d
    spacing = struct.unpack_from(f"<{d}d", data, off)
    off += 8 * d
    comps = data[off]
    off += 1
    count = comps * int(np.prod(shape))
    if len(data) - off != 8 * count:
        raise InvalidArgumentError(f"NLFD payload holds {len(data) - off} bytes, expected {8 * count}")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape((comps, *shape))
    return values.astype(np.float64), spacing


def write_field(path, u: GridField) -> Path:
    path = Path(path)
    path.write_bytes(encode(u.values, u.grid.spacing))
    return path


def read_field(path, periodic: bool = False, origin=None) -> GridField:
    """Read an NLFD file into a GridField (grid geometry beyond n and spacing is supplied by the caller)."""
    values, spacing = decode(Path(path).read_bytes())
    grid = Grid(values.ndim - 1, values.shape[1:], spacing, periodic=periodic, origin=origin)
    return GridField(grid, values)
