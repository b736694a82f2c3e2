from .evidence import (VACUOUS, Bba, TotalConflictError, combine_arrays, dempster_combine,
                       pignistic, pignistic_arrays)
from .geometry import GridGeometry, split_displacement, world_to_cell
from .rng import RandomStreams, Stage, draw_random_block
from .state import EMPTY, FilterParams, GridCellState, GridMap, ParticleStore

__all__ = [
    "Bba", "VACUOUS", "TotalConflictError", "combine_arrays", "dempster_combine", "pignistic",
    "pignistic_arrays", "GridGeometry", "world_to_cell", "split_displacement", "RandomStreams",
    "Stage", "draw_random_block", "EMPTY", "FilterParams", "GridCellState", "GridMap",
    "ParticleStore",
]
