"""File formats: the PLF1 binary field dump, RFC-4180 CSV reports, manifests.

PLF1 layout (normative, little-endian):
    magic "PLF1" | u32 dim | u32 n | u32 component_count | f64 extent |
    f64 samples, component-major, each component row-major over the axes.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .grid import Grid

_MAGIC = b"PLF1"
_HEADER = struct.Struct("<4sIIId")


def write_field(path, grid: Grid, u: np.ndarray) -> None:
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-grid.dim:] != grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {grid.shape}")
    ncomp = int(np.prod(u.shape[: u.ndim - grid.dim], dtype=int)) if u.ndim > grid.dim else 1
    flat = np.ascontiguousarray(u.reshape((ncomp,) + grid.shape))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, grid.dim, grid.n, ncomp, grid.extent))
        fh.write(flat.astype("<f8").tobytes())


def read_field(path):
    """Read a PLF1 dump; returns (grid, array of shape (ncomp, *grid.shape))."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, dim, n, ncomp, extent = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError(f"not a PLF1 file: magic {magic!r}")
        grid = Grid(int(dim), int(n), float(extent))
        count = ncomp * grid.size
        data = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
    return grid, data.reshape((ncomp,) + grid.shape).copy()


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    """Deterministic CSV: shortest round-trip float formatting, RFC-4180 quoting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"empty CSV: {path}")
    return rows[0], rows[1:]


def write_manifest(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_plotdata(path, column_names, columns) -> None:
    """Gnuplot-style columnar text with a '#' header naming each column."""
    columns = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w") as fh:
        fh.write("# " + " ".join(column_names) + "\n")
        for row in zip(*columns) if columns else []:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
