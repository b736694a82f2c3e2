"""Counter-based random numbers.

Every value is addressed by ``(seed, step, stage, index)``: the number at a
logical index never depends on how many threads produced the block, on the
block boundaries or on call order. This stands in for pre-sampled random
arrays without having to store them.
"""

from __future__ import annotations

import enum
from functools import lru_cache

import numpy as np
from scipy.special import ndtri

_TWO_M53 = 2.0 ** -53


class Stage(enum.IntEnum):
    """Independent random streams used by the pipeline and the simulator."""

    PRED_POS_X = 1
    PRED_POS_Y = 2
    PRED_VEL_X = 3
    PRED_VEL_Y = 4
    BIRTH_POS_X = 10
    BIRTH_POS_Y = 11
    BIRTH_VEL_X = 12
    BIRTH_VEL_Y = 13
    BIRTH_RADIAL = 14
    BIRTH_TANGENT = 15
    RESAMPLE = 20
    RESET_CELL = 21
    RESET_POS_X = 22
    RESET_POS_Y = 23
    RESET_VEL_X = 24
    RESET_VEL_Y = 25
    SIM_LIDAR_RANGE = 40
    SIM_RADAR_DETECT = 41
    SIM_RADAR_DOPPLER = 42
    SIM_RADAR_POS = 43
    ORACLE = 60
    AUX = 99


@lru_cache(maxsize=4096)
def _key(seed: int, step: int, stage: int) -> tuple[int, int]:
    state = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, step, stage]).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def raw_block(seed: int, step: int, stage: int, start: int, stop: int) -> np.ndarray:
    """Raw 64-bit words for logical indices ``start <= i < stop``."""
    if stop < start:
        raise ValueError("stop < start")
    n = stop - start
    if n == 0:
        return np.empty(0, dtype=np.uint64)
    k0, k1 = _key(int(seed), int(step), int(stage))
    bg = np.random.Philox(key=np.array([k0, k1], dtype=np.uint64))
    # Philox emits four words per counter increment
    bg.advance(start // 4)
    skip = start % 4
    return bg.random_raw(n + skip)[skip:]


def uniform_from_raw(raw: np.ndarray) -> np.ndarray:
    return (raw >> np.uint64(11)).astype(np.float64) * _TWO_M53


def normal_from_raw(raw: np.ndarray) -> np.ndarray:
    return ndtri(((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53)


def draw_random_block(seed: int, step: int, stage: int, start: int, stop: int,
                      distribution: str = "uniform") -> np.ndarray:
    """Reproducible block of uniform [0, 1) or standard normal values."""
    raw = raw_block(seed, step, stage, start, stop)
    if distribution == "uniform":
        return uniform_from_raw(raw)
    if distribution == "normal":
        return normal_from_raw(raw)
    raise ValueError(f"unknown distribution {distribution!r}")


class RandomStreams:
    """Convenience wrapper binding a seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def uniform(self, step: int, stage: int, n: int, start: int = 0) -> np.ndarray:
        return draw_random_block(self.seed, step, stage, start, start + n, "uniform")

    def normal(self, step: int, stage: int, n: int, start: int = 0) -> np.ndarray:
        return draw_random_block(self.seed, step, stage, start, start + n, "normal")
