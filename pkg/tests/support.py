"""Shared generators for randomized filter tests."""

import numpy as np

from dyngrid.core import FilterParams, GridGeometry
from dyngrid.measurement import MeasurementGrid


def random_measurement(geom: GridGeometry, rng, p_meas=0.3, p_doppler=0.2) -> MeasurementGrid:
    m = MeasurementGrid.vacuous(geom)
    n = geom.n_cells
    o = rng.random(n)
    f = rng.random(n) * (1 - o)
    occ = rng.random(n) < p_meas
    m.m_occ[:] = np.where(occ, o, 0.0)
    m.m_free[:] = np.where(occ, 0.0, f)
    d = occ & (rng.random(n) < p_doppler / max(p_meas, 1e-9))
    ang = rng.random(n) * 2 * np.pi
    m.has_doppler[:] = d
    m.dir_x[:] = np.cos(ang)
    m.dir_y[:] = np.sin(ang)
    m.radial_speed[:] = np.where(d, rng.normal(0, 2, n), 0.0)
    m.doppler_sd[:] = rng.uniform(0.2, 1.0, n)
    m.p_assoc[:] = np.where(d, rng.random(n), 0.0)
    return m


def random_params(rng, nu=1000, seed=None) -> FilterParams:
    return FilterParams(p_s=float(rng.uniform(0.8, 1.0)), p_b=float(rng.uniform(0.0, 0.3)), nu=nu,
                        nu_b=int(rng.integers(0, nu // 2)), sigma_birth_vel=float(rng.uniform(0.5, 5)),
                        sigma_proc_pos=float(rng.uniform(0, 0.1)), sigma_proc_vel=float(rng.uniform(0, 2)),
                        free_discount_tau=float(rng.uniform(0.5, 5)),
                        seed=int(rng.integers(0, 2**31)) if seed is None else seed)
