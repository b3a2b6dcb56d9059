"""Snapshot files: a JSON text header next to a raw float64 payload.

The payload is the 2-form field as little-endian 64-bit floats of length
n^4 * 6, C-ordered over (x0, x1, x2, x3, component) with x0 slowest, in the
frozen component order.  Round-trips are bit exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from donflow.lattice import Grid

COMPONENT_ORDER = ["c01", "c02", "c03", "c23", "c31", "c12"]
PAYLOAD_DTYPE = "<f8"


def save_snapshot(base, grid, rho, time, monitors=None):
    """Write ``<base>.json`` and ``<base>.bin``; returns the header path."""
    base = Path(base)
    rho = np.ascontiguousarray(rho, dtype=PAYLOAD_DTYPE)
    if rho.shape != grid.shape + (6,):
        raise ValueError(f"field shape {rho.shape} does not match grid n={grid.n}")
    payload = base.with_suffix(".bin")
    payload.write_bytes(rho.tobytes(order="C"))
    header = {
        "n": grid.n,
        "scheme": grid.scheme,
        "component_order": COMPONENT_ORDER,
        "time": float(time),
        "monitors": dict(monitors or {}),
        "payload": payload.name,
        "dtype": PAYLOAD_DTYPE,
    }
    hpath = base.with_suffix(".json")
    hpath.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return hpath


def load_snapshot(header_path):
    """Read a snapshot; returns (grid, rho, time, monitors)."""
    header_path = Path(header_path)
    header = json.loads(header_path.read_text())
    if header.get("component_order") != COMPONENT_ORDER:
        raise ValueError("snapshot uses an unknown component order")
    grid = Grid(int(header["n"]), header["scheme"])
    raw = (header_path.parent / header["payload"]).read_bytes()
    rho = np.frombuffer(raw, dtype=header.get("dtype", PAYLOAD_DTYPE))
    rho = rho.reshape(grid.shape + (6,)).astype(float)
    return grid, rho, float(header["time"]), dict(header["monitors"])
