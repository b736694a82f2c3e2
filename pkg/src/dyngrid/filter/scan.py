"""Inclusive prefix sums with O(1) range-sum queries.

Two flavours:

* ``exact``: the scan is carried out in integer arithmetic on 16-bit limbs of
  the float mantissas. A range sum is therefore the exact real sum of the
  range, rounded once; it is bitwise equal to ``math.fsum`` of the range.
  Used in strict-determinism mode.
* ``compensated``: float64 scan with TwoSum error terms carried in a second
  scan, so differences of prefix values keep full relative precision even
  when the prefix itself is much larger than the range. Can be split into
  blocks scanned on worker threads; block order is fixed, so the result
  depends on the thread count but is reproducible for a given count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_LIMB = 16


class Workers:
    """Splits index ranges into contiguous chunks run on a thread pool."""

    def __init__(self, threads: int = 1):
        self.threads = max(1, int(threads))
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    def chunks(self, n: int):
        k = min(self.threads, max(1, n))
        edges = np.linspace(0, n, k + 1).astype(np.int64)
        return [(int(edges[i]), int(edges[i + 1])) for i in range(k)]

    def run(self, fn, n: int):
        """Call ``fn(lo, hi)`` for each chunk of ``range(n)``; returns results in order."""
        parts = self.chunks(n)
        if self._pool is None or len(parts) == 1:
            return [fn(lo, hi) for lo, hi in parts]
        return list(self._pool.map(lambda p: fn(*p), parts))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


SERIAL = Workers(1)


def _two_sum_err(a, b, s):
    """Rounding error of s = fl(a + b), elementwise."""
    bb = s - a
    return (a - (s - bb)) + (b - bb)


def _compensated_block(v: np.ndarray):
    hi = np.cumsum(v)
    if v.size == 0:
        return hi, hi.copy()
    prev = np.empty_like(hi)
    prev[0] = 0.0
    prev[1:] = hi[:-1]
    lo = np.cumsum(_two_sum_err(prev, v, hi))
    return hi, lo


class PrefixSum:
    def __init__(self, values, exact: bool = False, workers: Workers = SERIAL):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.exact = exact
        if exact:
            self._build_exact()
        else:
            self._build_compensated(workers)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    # compensated -----------------------------------------------------------
    def _build_compensated(self, workers: Workers):
        v = self.values
        parts = workers.run(lambda lo, hi: _compensated_block(v[lo:hi]), v.size)
        if len(parts) == 1:
            hi, lo = parts[0]
        else:
            his, los = [], []
            off_hi, off_lo = 0.0, 0.0
            for bh, bl in parts:
                if bh.size == 0:
                    continue
                s = bh + off_hi
                err = _two_sum_err(np.full_like(bh, off_hi), bh, s)
                his.append(s)
                los.append(bl + err + off_lo)
                # carry block total forward as a double-double
                t = off_hi + bh[-1]
                off_lo = off_lo + bl[-1] + float(_two_sum_err(off_hi, bh[-1], t))
                off_hi = t
            hi = np.concatenate(his) if his else np.empty(0)
            lo = np.concatenate(los) if los else np.empty(0)
        self._hi = np.concatenate([[0.0], hi])
        self._lo = np.concatenate([[0.0], lo])

    # exact -----------------------------------------------------------------
    def _build_exact(self):
        v = self.values
        n = v.size
        if n and not np.all(np.isfinite(v)):
            raise ValueError("exact scan needs finite values")
        mant, expo = np.frexp(v)
        m = np.ldexp(mant, 53).astype(np.int64)  # v = m * 2**(expo - 53), exact
        e = expo.astype(np.int64) - 53
        nz = m != 0
        am = np.abs(m)
        # strip trailing zero bits so the exponent range stays small
        low = am & -am
        tz = np.where(nz, np.frexp(low.astype(np.float64))[1] - 1, 0).astype(np.int64)
        am = am >> tz
        e = e + tz
        self._e0 = int(e[nz].min()) if nz.any() else 0
        s = np.where(nz, e - self._e0, 0)
        q, r = np.divmod(s, _LIMB)
        k = int(q.max()) + 4 if n else 1
        limbs = np.zeros((k, n), dtype=np.int64)
        sign = np.where(m < 0, -1, 1).astype(np.int64)
        cols = np.arange(n)
        mask = (1 << _LIMB) - 1
        for j in range(4):
            piece = ((am >> (_LIMB * j)) & mask) << r
            limbs[q + j, cols] += sign * piece
        self._limbs = np.concatenate([np.zeros((k, 1), dtype=np.int64), np.cumsum(limbs, axis=1)], axis=1)
        self._scales = [self._e0 + _LIMB * i for i in range(k)]

    def _exact_ranges(self, lo_idx: np.ndarray, hi_idx: np.ndarray) -> np.ndarray:
        # sums of values[lo:hi] (half open) for prefix positions lo, hi
        d = self._limbs[:, hi_idx] - self._limbs[:, lo_idx]
        out = np.zeros(d.shape[1], dtype=np.float64)
        nzcols = np.flatnonzero(np.any(d != 0, axis=0))
        if nzcols.size == 0:
            return out
        terms = np.ldexp(d[:, nzcols].astype(np.float64), np.asarray(self._scales)[:, None])
        out[nzcols] = [math.fsum(col) for col in terms.T.tolist()]
        return out

    # queries ---------------------------------------------------------------
    def range_sum(self, start, end) -> np.ndarray:
        """Sum of ``values[start..end]`` (inclusive); 0 where ``start < 0`` or ``end < start``."""
        scalar = np.ndim(start) == 0 and np.ndim(end) == 0
        start = np.atleast_1d(np.asarray(start, dtype=np.int64))
        end = np.atleast_1d(np.asarray(end, dtype=np.int64))
        valid = (start >= 0) & (end >= start)
        lo = np.where(valid, start, 0)
        hi = np.where(valid, end + 1, 0)
        if self.exact:
            out = self._exact_ranges(lo, hi)
        else:
            out = (self._hi[hi] - self._hi[lo]) + (self._lo[hi] - self._lo[lo])
        out = np.where(valid, out, 0.0)
        return float(out[0]) if scalar else out

    def total(self) -> float:
        if self.n == 0:
            return 0.0
        return float(self.range_sum(np.array([0]), np.array([self.n - 1]))[0])

    def inclusive(self) -> np.ndarray:
        """All inclusive prefix values (O(n) queries in exact mode)."""
        if self.n == 0:
            return np.empty(0)
        if self.exact:
            return self._exact_ranges(np.zeros(self.n, dtype=np.int64), np.arange(1, self.n + 1))
        return self._hi[1:] + self._lo[1:]


def plain_cumsum(values, workers: Workers = SERIAL) -> np.ndarray:
    """Uncompensated inclusive scan; blocked when more than one worker is used."""
    v = np.asarray(values, dtype=np.float64)
    parts = workers.run(lambda lo, hi: np.cumsum(v[lo:hi]), v.size)
    if len(parts) <= 1:
        return parts[0] if parts else np.empty(0)
    out, off = [], 0.0
    for p in parts:
        out.append(p + off)
        if p.size:
            off = off + p[-1]
    return np.concatenate(out)
