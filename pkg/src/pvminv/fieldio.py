"""Field files: the binary ``PQGF`` container and x1,x2,x3,value CSV.

Binary layout (little-endian)::

    magic      4 bytes  b"PQGF"
    version    u32      1
    n1 n2 n3   u32 x 3
    L1 L2 L3   f64 x 3
    mean_zero  u8
    values     f64 x n1*n2*n3, C order (x3 fastest)
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .grid import GridSpec, ScalarField

MAGIC = b"PQGF"
VERSION = 1
_HEADER = struct.Struct("<4sI3I3dB")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def to_bytes(f: ScalarField) -> bytes:
    g = f.grid
    header = _HEADER.pack(MAGIC, VERSION, *g.n, *g.L, 1 if f.mean_zero else 0)
    return header + f.values.astype("<f8").tobytes(order="C")


def from_bytes(data: bytes) -> ScalarField:
    if len(data) < _HEADER.size:
        raise ValueError("truncated PQGF header")
    magic, version, n1, n2, n3, L1, L2, L3, mz = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported PQGF version {version}")
    grid = GridSpec((n1, n2, n3), (L1, L2, L3))
    body = data[_HEADER.size:]
    if len(body) != 8 * grid.size:
        raise ValueError(f"expected {grid.size} values, found {len(body) // 8}")
    vals = np.frombuffer(body, dtype="<f8").reshape(grid.shape)
    return ScalarField(grid, vals.astype(np.float64), mean_zero=bool(mz))


def write_field(path, f: ScalarField) -> None:
    atomic_write_bytes(path, to_bytes(f))


def read_field(path) -> ScalarField:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv(path)
    return from_bytes(path.read_bytes())


def write_csv(path, f: ScalarField) -> None:
    x1, x2, x3 = f.grid.mesh()
    lines = ["x1,x2,x3,value"]
    for a, b, c, v in zip(x1.ravel(), x2.ravel(), x3.ravel(), f.values.ravel()):
        lines.append(",".join(repr(float(t)) for t in (a, b, c, v)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path, L=None, mean_zero: bool = False) -> ScalarField:
    """Read a field CSV; the grid is inferred from the distinct coordinates.

    Periods default to ``n * spacing`` per axis unless ``L`` is given.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["x1", "x2", "x3", "value"]:
        raise ValueError(f"{path}: expected header x1,x2,x3,value")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    axes = [np.unique(data[:, a]) for a in range(3)]
    n = tuple(len(ax) for ax in axes)
    if min(n) < 2:
        raise ValueError(f"{path}: every axis needs at least two distinct coordinates")
    if L is None:
        L = tuple(len(ax) * (ax[1] - ax[0]) for ax in axes)
    grid = GridSpec(n, L)
    idx = [np.searchsorted(axes[a], data[:, a]) for a in range(3)]
    vals = np.full(grid.shape, np.nan)
    vals[idx[0], idx[1], idx[2]] = data[:, 3]
    if np.isnan(vals).any():
        raise ValueError(f"{path}: CSV does not cover the full grid")
    return ScalarField(grid, vals, mean_zero=mean_zero)
