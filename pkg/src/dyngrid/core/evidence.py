"""Dempster-Shafer algebra on the frame {occupied, free}.

A basic belief assignment carries a mass for occupied, a mass for free and
implicitly the remainder on the unknown set {O, F}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONFLICT_LIMIT = 1.0 - 1e-12
_TOL = 1e-12


class TotalConflictError(ValueError):
    """Two BBAs are (numerically) fully contradictory."""


@dataclass(frozen=True)
class Bba:
    m_occ: float = 0.0
    m_free: float = 0.0

    def __post_init__(self):
        if self.m_occ < 0 or self.m_free < 0 or self.m_occ + self.m_free > 1 + _TOL:
            raise ValueError(f"invalid BBA ({self.m_occ}, {self.m_free})")

    @property
    def m_unknown(self) -> float:
        return max(0.0, 1.0 - self.m_occ - self.m_free)


VACUOUS = Bba(0.0, 0.0)


def combine_arrays(a_o, a_f, b_o, b_f):
    """Elementwise Dempster combination.

    Returns ``(m_occ, m_free, conflict)`` where ``conflict`` flags entries
    with conflict mass at or above ``CONFLICT_LIMIT``; those entries of the
    mass outputs are undefined (set to 0) and must not be used.

    Products are grouped so that swapping the operands yields bitwise
    identical results.
    """
    a_o = np.asarray(a_o, dtype=np.float64)
    a_f = np.asarray(a_f, dtype=np.float64)
    b_o = np.asarray(b_o, dtype=np.float64)
    b_f = np.asarray(b_f, dtype=np.float64)
    a_u = np.maximum((1.0 - a_o) - a_f, 0.0)
    b_u = np.maximum((1.0 - b_o) - b_f, 0.0)
    k = a_o * b_f + a_f * b_o
    conflict = k >= CONFLICT_LIMIT
    norm = np.where(conflict, 1.0, 1.0 - k)
    m_o = (a_o * b_o + (a_o * b_u + a_u * b_o)) / norm
    m_f = (a_f * b_f + (a_f * b_u + a_u * b_f)) / norm
    m_o = np.where(conflict, 0.0, m_o)
    m_f = np.where(conflict, 0.0, m_f)
    return m_o, m_f, conflict


def dempster_combine(a: Bba, b: Bba) -> Bba:
    """Dempster's rule of combination with conflict renormalization.

    Raises TotalConflictError when the conflict mass reaches 1 - 1e-12.
    """
    o, f, conflict = combine_arrays(a.m_occ, a.m_free, b.m_occ, b.m_free)
    if bool(conflict):
        raise TotalConflictError(f"total conflict between {a} and {b}")
    o, f = min(float(o), 1.0), float(f)
    # clip 1-ulp overshoot so the result passes validation
    if o + f > 1.0:
        f = max(1.0 - o, 0.0)
    return Bba(o, f)


def pignistic_arrays(m_occ, m_free):
    m_occ = np.asarray(m_occ, dtype=np.float64)
    return m_occ + 0.5 * (1.0 - m_occ - np.asarray(m_free, dtype=np.float64))


def pignistic(b: Bba) -> float:
    """Point probability of occupancy, unknown mass split evenly."""
    return float(pignistic_arrays(b.m_occ, b.m_free))
