import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyngrid.filter.scan import PrefixSum, Workers, plain_cumsum

finite = st.floats(-1e30, 1e30, allow_nan=False, allow_infinity=False)


def _ranges(n, rng, k=50):
    a = rng.integers(0, n, k)
    b = rng.integers(0, n, k)
    return np.minimum(a, b), np.maximum(a, b)


@given(st.lists(finite, min_size=1, max_size=200), st.integers(0, 2**32 - 1))
def test_exact_scan_equals_fsum(values, seed):
    rng = np.random.default_rng(seed)
    ps = PrefixSum(values, exact=True)
    lo, hi = _ranges(len(values), rng)
    got = ps.range_sum(lo, hi)
    want = [math.fsum(values[a:b + 1]) for a, b in zip(lo, hi)]
    assert got.tolist() == want
    assert ps.total() == math.fsum(values)


def test_exact_scan_subnormals_and_zero():
    v = [5e-324, -5e-324, 1e-310, 0.0, 1e300, -1e300, 3.0]
    ps = PrefixSum(v, exact=True)
    assert ps.range_sum(0, 6) == math.fsum(v)
    assert ps.range_sum(2, 2) == 1e-310
    assert ps.inclusive().tolist() == [math.fsum(v[:i + 1]) for i in range(len(v))]


def test_empty_ranges_are_zero():
    ps = PrefixSum([1.0, 2.0, 3.0], exact=True)
    np.testing.assert_array_equal(ps.range_sum([-1, 2, 0], [-1, 1, 0]), [0.0, 0.0, 1.0])
    assert PrefixSum([], exact=True).total() == 0.0
    assert PrefixSum([]).total() == 0.0


@pytest.mark.parametrize("threads", [1, 2, 5])
def test_compensated_scan_relative_error(threads):
    rng = np.random.default_rng(threads)
    v = rng.random(50_000) ** 4
    w = Workers(threads)
    ps = PrefixSum(v, workers=w)
    w.close()
    lo, hi = _ranges(v.size, rng, 200)
    got = ps.range_sum(lo, hi)
    want = np.array([math.fsum(v[a:b + 1].tolist()) for a, b in zip(lo, hi)])
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-300)


def test_compensated_scan_small_range_after_large_prefix():
    v = np.concatenate([np.full(1000, 1e6), [1e-9, 2e-9]])
    ps = PrefixSum(v)
    assert ps.range_sum(1001, 1001) == pytest.approx(2e-9, rel=1e-6)


def test_compensated_deterministic_per_thread_count():
    v = np.random.default_rng(0).random(10_001)
    a = PrefixSum(v, workers=Workers(3)).inclusive()
    b = PrefixSum(v, workers=Workers(3)).inclusive()
    assert np.array_equal(a, b)


def test_plain_cumsum_blocks():
    v = np.arange(11, dtype=float)
    np.testing.assert_array_equal(plain_cumsum(v, Workers(4)), np.cumsum(v))
    assert plain_cumsum([], Workers(2)).size == 0


def test_exact_rejects_nonfinite():
    with pytest.raises(ValueError):
        PrefixSum([1.0, math.inf], exact=True)
