import numpy as np
import pytest

from dyngrid import io as dio
from dyngrid.core import FilterParams, GridGeometry, GridMap
from dyngrid.filter import DynamicGridFilter, read_snapshot, write_snapshot
from dyngrid.filter.snapshot import FIELDS, RECORD, export_csv, export_pgm, snapshot_bytes

from support import random_measurement


def _filtered_grid():
    geom = GridGeometry(0.1, 8)
    f = DynamicGridFilter(geom, FilterParams(nu=500, nu_b=100, seed=1), strict=True)
    return f.step(random_measurement(geom, np.random.default_rng(1)), 0.1)


def test_snapshot_layout():
    g = GridMap.vacuous(GridGeometry(0.25, 3))
    data = snapshot_bytes(g)
    assert data[:4] == b"DGRD"
    assert int.from_bytes(data[4:6], "little") == 1
    assert int.from_bytes(data[6:10], "little") == 3
    assert np.frombuffer(data[10:18], "<f8")[0] == 0.25
    assert len(data) == 18 + 9 * (9 * 4 + 1)
    assert RECORD.itemsize == 37


def test_snapshot_round_trip(tmp_path):
    g = _filtered_grid()
    write_snapshot(tmp_path / "s.dgrd", g)
    s = read_snapshot(tmp_path / "s.dgrd")
    assert s.cells_per_side == 8 and s.cell_size == 0.1
    for name in FIELDS:
        np.testing.assert_array_equal(s.records[name], np.asarray(getattr(g, name)).astype(s.records[name].dtype))


def test_snapshot_rejects_bad_files(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(ValueError):
        read_snapshot(p)
    good = snapshot_bytes(GridMap.vacuous(GridGeometry(0.1, 2)))
    p.write_bytes(good[:-3])
    with pytest.raises(ValueError):
        read_snapshot(p)
    p.write_bytes(good[:4] + (2).to_bytes(2, "little") + good[6:])
    with pytest.raises(ValueError):
        read_snapshot(p)


def test_export_pgm_values(tmp_path):
    g = GridMap.vacuous(GridGeometry(0.1, 3))
    g.m_occ_up[4] = 1.0
    write_snapshot(tmp_path / "s", g)
    export_pgm(read_snapshot(tmp_path / "s"), tmp_path / "s.pgm")
    img = dio.read_pgm(tmp_path / "s.pgm")
    assert img.shape == (3, 3)
    assert img[1, 1] == 255
    assert np.all(np.delete(img.ravel(), 4) == 128)


def test_export_csv_round_trip(tmp_path):
    g = _filtered_grid()
    write_snapshot(tmp_path / "s", g)
    s = read_snapshot(tmp_path / "s")
    export_csv(s, tmp_path / "s.csv", seed=1, scenario_hash="h")
    comment, cols, rows = dio.read_csv(tmp_path / "s.csv")
    assert cols == ["cell"] + FIELDS
    arr = np.array(rows, dtype=np.float64)
    for j, name in enumerate(FIELDS, start=1):
        assert np.array_equal(arr[:, j].astype(s.records[name].dtype), s.records[name])
