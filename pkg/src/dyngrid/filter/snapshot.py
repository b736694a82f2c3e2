"""Binary grid snapshots.

Layout (little-endian): magic ``DGRD``, version u16, cells_per_side u32,
cell_size f64, then one packed record per cell in row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core.state import GridMap
from .. import io as dio

MAGIC = b"DGRD"
VERSION = 1
_HEADER = struct.Struct("<4sHId")

RECORD = np.dtype([
    ("m_occ_up", "<f4"), ("m_free_up", "<f4"), ("rho_p", "<f4"), ("rho_b", "<f4"),
    ("mean_vx", "<f4"), ("mean_vy", "<f4"), ("var_vx", "<f4"), ("var_vy", "<f4"),
    ("cov_vxy", "<f4"), ("moments_valid", "u1"),
])
FIELDS = list(RECORD.names)


@dataclass
class Snapshot:
    cells_per_side: int
    cell_size: float
    records: np.ndarray  # structured array with dtype RECORD

    def field(self, name: str) -> np.ndarray:
        return self.records[name].astype(np.float64)

    def occupancy(self) -> np.ndarray:
        o, f = self.field("m_occ_up"), self.field("m_free_up")
        return o + 0.5 * (1.0 - o - f)

    def valid(self) -> np.ndarray:
        return self.records["moments_valid"].astype(bool)


def snapshot_bytes(grid: GridMap) -> bytes:
    geom = grid.geometry
    rec = np.zeros(geom.n_cells, dtype=RECORD)
    for name in FIELDS:
        rec[name] = getattr(grid, name)
    return _HEADER.pack(MAGIC, VERSION, geom.cells_per_side, geom.cell_size) + rec.tobytes()


def write_snapshot(path, grid: GridMap):
    Path(path).write_bytes(snapshot_bytes(grid))


def read_snapshot(path) -> Snapshot:
    return parse_snapshot(Path(path).read_bytes(), str(path))


def parse_snapshot(data: bytes, path="<bytes>") -> Snapshot:
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, version, n, cell = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a grid snapshot")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    body = data[_HEADER.size:]
    if len(body) != n * n * RECORD.itemsize:
        raise ValueError(f"{path}: expected {n * n} cell records")
    return Snapshot(n, cell, np.frombuffer(body, dtype=RECORD).copy())


def export_pgm(snap: Snapshot, path, comment=None):
    img = dio.probability_to_gray(snap.occupancy()).reshape(snap.cells_per_side, -1)
    dio.write_pgm(path, img, comment)


def export_csv(snap: Snapshot, path, seed=None, scenario_hash=None):
    rows = ([i] + [snap.records[name][i].item() for name in FIELDS]
            for i in range(snap.records.shape[0]))
    # f32 fields go through float() so 9 significant digits round-trip them
    dio.write_csv(path, ["cell"] + FIELDS, rows, seed, scenario_hash)
