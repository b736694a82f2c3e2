from .pipeline import (DynamicGridFilter, PipelineScratch, allocate_birth_slots, compute_cell_moments,
                       equal_weights, initialize_new_particles, predict_particles, resample,
                       sort_and_assign, step, update_cell_occupancy, update_persistent_particles)
from .scan import PrefixSum, Workers
from .snapshot import read_snapshot, write_snapshot

__all__ = [
    "DynamicGridFilter", "PipelineScratch", "allocate_birth_slots", "compute_cell_moments",
    "equal_weights", "initialize_new_particles", "predict_particles", "resample", "sort_and_assign",
    "step", "update_cell_occupancy", "update_persistent_particles", "PrefixSum", "Workers",
    "read_snapshot", "write_snapshot",
]
