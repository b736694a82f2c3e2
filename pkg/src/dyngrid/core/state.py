"""Filter configuration and structure-of-arrays state containers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .geometry import GridGeometry

EMPTY = -1  # start/end index of a cell without particles


@dataclass(frozen=True)
class FilterParams:
    """Process model and particle budget. Defaults are the published set,
    except p_b which sits mid-range of the published sweep."""

    p_s: float = 0.99
    p_b: float = 0.02
    nu: int = 2_000_000
    nu_b: int = 200_000
    sigma_birth_vel: float = 4.0
    sigma_proc_pos: float = 0.02
    sigma_proc_vel: float = 0.8
    free_discount_tau: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("p_s", "p_b"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} not a probability")
        for name in ("sigma_birth_vel", "sigma_proc_pos", "sigma_proc_vel"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.nu <= 0 or self.nu_b < 0:
            raise ValueError("nu must be > 0 and nu_b >= 0")
        if self.free_discount_tau <= 0:
            raise ValueError("free_discount_tau must be > 0")

    def free_discount(self, dt: float) -> float:
        """alpha(T) = exp(-T / tau)."""
        return math.exp(-dt / self.free_discount_tau)

    def with_(self, **kw) -> "FilterParams":
        return replace(self, **kw)

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


@dataclass
class ParticleStore:
    pos_x: np.ndarray
    pos_y: np.ndarray
    vel_x: np.ndarray
    vel_y: np.ndarray
    weight: np.ndarray
    cell_index: np.ndarray
    assoc: np.ndarray

    _FLOAT = ("pos_x", "pos_y", "vel_x", "vel_y", "weight")

    @classmethod
    def empty(cls, n: int = 0, sentinel: int = 0) -> "ParticleStore":
        z = lambda: np.zeros(n, dtype=np.float64)  # noqa: E731
        return cls(z(), z(), z(), z(), z(),
                   np.full(n, sentinel, dtype=np.int64), np.zeros(n, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.weight.shape[0])

    def __len__(self):
        return self.count

    def arrays(self):
        return {name: getattr(self, name) for name in
                ("pos_x", "pos_y", "vel_x", "vel_y", "weight", "cell_index", "assoc")}

    def take(self, idx) -> "ParticleStore":
        return ParticleStore(**{k: v[idx] for k, v in self.arrays().items()})

    def copy(self) -> "ParticleStore":
        return ParticleStore(**{k: v.copy() for k, v in self.arrays().items()})

    @staticmethod
    def concatenate(a: "ParticleStore", b: "ParticleStore") -> "ParticleStore":
        return ParticleStore(**{k: np.concatenate([v, getattr(b, k)]) for k, v in a.arrays().items()})

    def check(self):
        n = self.count
        for k, v in self.arrays().items():
            if v.shape != (n,):
                raise ValueError(f"array {k} has shape {v.shape}, expected ({n},)")
        if n and self.weight.min() < 0:
            raise ValueError("negative particle weight")


@dataclass
class GridCellState:
    """Scalar view of one cell (for inspection and tests)."""

    start_idx: int
    end_idx: int
    m_occ_pred: float
    m_free_pred: float
    m_occ_up: float
    m_free_up: float
    rho_p: float
    rho_b: float
    mu_a: float
    mu_ua: float
    mean_vx: float
    mean_vy: float
    var_vx: float
    var_vy: float
    cov_vxy: float
    moments_valid: bool


_CELL_FLOATS = ("m_occ_pred", "m_free_pred", "m_occ_up", "m_free_up", "rho_p", "rho_b",
                "mu_a", "mu_ua", "mean_vx", "mean_vy", "var_vx", "var_vy", "cov_vxy")


@dataclass
class GridMap:
    geometry: GridGeometry
    start_idx: np.ndarray
    end_idx: np.ndarray
    m_occ_pred: np.ndarray
    m_free_pred: np.ndarray
    m_occ_up: np.ndarray
    m_free_up: np.ndarray
    rho_p: np.ndarray
    rho_b: np.ndarray
    mu_a: np.ndarray
    mu_ua: np.ndarray
    mean_vx: np.ndarray
    mean_vy: np.ndarray
    var_vx: np.ndarray
    var_vy: np.ndarray
    cov_vxy: np.ndarray
    moments_valid: np.ndarray
    step_index: int = 0
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def vacuous(cls, geometry: GridGeometry) -> "GridMap":
        c = geometry.n_cells
        kw = {name: np.zeros(c, dtype=np.float64) for name in _CELL_FLOATS}
        return cls(geometry=geometry,
                   start_idx=np.full(c, EMPTY, dtype=np.int64),
                   end_idx=np.full(c, EMPTY, dtype=np.int64),
                   moments_valid=np.zeros(c, dtype=bool), **kw)

    @property
    def n_cells(self) -> int:
        return self.geometry.n_cells

    def cell_arrays(self):
        out = {"start_idx": self.start_idx, "end_idx": self.end_idx}
        out.update({name: getattr(self, name) for name in _CELL_FLOATS})
        out["moments_valid"] = self.moments_valid
        return out

    def copy(self) -> "GridMap":
        return GridMap(geometry=self.geometry, step_index=self.step_index,
                       diagnostics=dict(self.diagnostics),
                       **{k: v.copy() for k, v in self.cell_arrays().items()})

    def cell(self, index: int) -> GridCellState:
        vals = {k: v[index].item() for k, v in self.cell_arrays().items()}
        return GridCellState(**vals)

    def occupancy(self) -> np.ndarray:
        """Pignistic occupancy probability per cell."""
        return self.m_occ_up + 0.5 * (1.0 - self.m_occ_up - self.m_free_up)

    def as_image(self, values: np.ndarray) -> np.ndarray:
        n = self.geometry.cells_per_side
        return np.asarray(values).reshape(n, n)
