#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Binary field checkpoints.

    b"TORUSLAB-CKPT <version> <config_hash>\\n"
    a, b, nx, ny, lambda, t          6 x float64, little-endian
    w                                nx*ny x float64, little-endian, row-major (x slow)
"""

import os
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from scripts.common.csvio import VERSION, ensure_dir
from scripts.common.errors import ConfigError
from scripts.common.torus import Field, TorusGrid

MAGIC = "TORUSLAB-CKPT"
_LE = np.dtype("<f8")


@dataclass
class Checkpoint:
    grid: TorusGrid
    lam: float
    t: float
    w: Field
    version: str
    config_hash: str


def save_checkpoint(path: str, grid: TorusGrid, lam: float, t: float, w: Field,
                    config_hash: Optional[str] = None) -> None:
    if w.shape != grid.shape:
        raise ConfigError(f"field shape {w.shape} does not match grid {grid.shape}")
    ensure_dir(os.path.dirname(path))
    header = np.array([grid.a, grid.b, grid.nx, grid.ny, lam, t], dtype=_LE)
    with open(path, "wb") as f:
        f.write(f"{MAGIC} {VERSION} {config_hash or 'none'}\n".encode("ascii"))
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(w, dtype=_LE).tobytes(order="C"))


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise ConfigError(f"{path}: not a checkpoint (no header line)")
    parts = blob[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 3 or parts[0] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint (bad magic)")
    body = blob[nl + 1:]
    if len(body) < 6 * _LE.itemsize:
        raise ConfigError(f"{path}: truncated checkpoint header")
    a, b, nx, ny, lam, t = np.frombuffer(body[:6 * _LE.itemsize], dtype=_LE)
    grid = TorusGrid(a=float(a), b=float(b), nx=int(nx), ny=int(ny))
    data = body[6 * _LE.itemsize:]
    if len(data) != grid.size * _LE.itemsize:
        raise ConfigError(f"{path}: expected {grid.size} values, found {len(data) // _LE.itemsize}")
    w = np.frombuffer(data, dtype=_LE).reshape(grid.shape).astype(float)
    return Checkpoint(grid=grid, lam=float(lam), t=float(t), w=w, version=parts[1], config_hash=parts[2])


def save_fields(directory: str, stem: str, grid: TorusGrid, lam: float, fields: Sequence[Field],
                config_hash: Optional[str] = None) -> List[str]:
    """One checkpoint per field, `<stem>_<i>.ckpt`; the time slot holds the index."""
    paths = []
    for i, f in enumerate(fields):
        p = os.path.join(directory, f"{stem}_{i:03d}.ckpt")
        save_checkpoint(p, grid, lam, float(i), f, config_hash)
        paths.append(p)
    return paths
