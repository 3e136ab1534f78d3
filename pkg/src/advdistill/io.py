"""
Binary artifact formats and atomic file helpers.

Field format (SGF1, shared repo-wide): magic ``SGF1``, u8 dims, u32 n per
axis, f64 L per axis, then f64 little-endian values in row-major order.
Frame stacks are a u32 frame-count header followed by that many
concatenated SGF1 records. Heatmaps are 8-bit binary PGM (P5). Checkpoints
(SGNO) live in :mod:`advdistill.operators` next to the model definitions.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .spectral import Field, SpectralGrid, make_grid

__all__ = [
    "write_field",
    "read_field",
    "write_frame_stack",
    "read_frame_stack",
    "write_pgm",
    "atomic_write_bytes",
    "atomic_write_text",
]

_MAGIC = b"SGF1"


def _pack_field(f: Field) -> bytes:
    g = f.grid
    head = _MAGIC + struct.pack("<B", g.dims)
    head += struct.pack(f"<{g.dims}I", *((g.n,) * g.dims))
    head += struct.pack(f"<{g.dims}d", *((g.length,) * g.dims))
    return head + f.values.astype("<f8").tobytes(order="C")


def _unpack_field(buf: bytes, offset: int = 0) -> tuple[Field, int]:
    if buf[offset : offset + 4] != _MAGIC:
        raise ValueError("not an SGF1 field record")
    offset += 4
    (dims,) = struct.unpack_from("<B", buf, offset)
    offset += 1
    ns = struct.unpack_from(f"<{dims}I", buf, offset)
    offset += 4 * dims
    ls = struct.unpack_from(f"<{dims}d", buf, offset)
    offset += 8 * dims
    if len(set(ns)) != 1 or len(set(ls)) != 1:
        raise ValueError("anisotropic grids are not supported")
    grid = make_grid(dims, ns[0], ls[0])
    count = int(np.prod(ns))
    vals = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(ns)
    offset += 8 * count
    return Field(grid, np.ascontiguousarray(vals)), offset


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write via a temp file + rename so readers never see partial files."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_field(path: str, f: Field) -> None:
    atomic_write_bytes(path, _pack_field(f))


def read_field(path: str) -> Field:
    with open(path, "rb") as fh:
        buf = fh.read()
    f, end = _unpack_field(buf)
    if end != len(buf):
        raise ValueError(f"trailing bytes in field file {path}")
    return f


def write_frame_stack(path: str, frames: list[Field]) -> None:
    blob = struct.pack("<I", len(frames))
    for f in frames:
        blob += _pack_field(f)
    atomic_write_bytes(path, blob)


def read_frame_stack(path: str) -> list[Field]:
    with open(path, "rb") as fh:
        buf = fh.read()
    (count,) = struct.unpack_from("<I", buf, 0)
    offset = 4
    frames = []
    for _ in range(count):
        f, offset = _unpack_field(buf, offset)
        frames.append(f)
    if offset != len(buf):
        raise ValueError(f"trailing bytes in frame stack {path}")
    return frames


def write_pgm(path: str, values: np.ndarray, lo: float | None = None, hi: float | None = None) -> None:
    """8-bit binary graymap of a 2D array (value range mapped to 0..255)."""
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 2:
        raise ValueError("PGM output needs a 2D array")
    lo = float(np.nanmin(vals)) if lo is None else lo
    hi = float(np.nanmax(vals)) if hi is None else hi
    if hi - lo < 1e-300:
        gray = np.zeros_like(vals, dtype=np.uint8)
    else:
        gray = np.clip((vals - lo) / (hi - lo) * 255.0, 0, 255).astype(np.uint8)
    header = f"P5\n{vals.shape[1]} {vals.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + gray.tobytes(order="C"))
