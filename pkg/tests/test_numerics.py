"""Guards for the numpy reduction properties the bit-equality design rests on.

If any of these ever fail on a new numpy, the solver/simulator equivalence
guarantee is void and both must move to a different canonical reduction.
"""

import numpy as np
from hypothesis import given, strategies as st

from fairalloc.numerics import canonical_sum, segment_mins, segment_sums

finite = st.floats(min_value=-1e9, max_value=1e9, allow_nan=False, allow_infinity=False)


@given(st.lists(finite, min_size=1, max_size=200), st.data())
def test_multi_segment_reduceat_matches_per_segment(xs, data):
    a = np.array(xs)
    cuts = sorted(data.draw(st.sets(st.integers(0, len(xs) - 1), min_size=1, max_size=8)))
    if cuts[0] != 0:
        cuts = [0] + cuts
    starts = np.array(cuts, dtype=np.intp)
    multi = segment_sums(a, starts)
    bounds = list(starts) + [len(xs)]
    singles = [canonical_sum(a[bounds[i] : bounds[i + 1]]) for i in range(len(starts))]
    assert multi.tolist() == singles


@given(st.lists(finite, min_size=1, max_size=64))
def test_canonical_sum_is_reduceat_single_segment(xs):
    a = np.array(xs)
    assert canonical_sum(a) == float(np.add.reduceat(a, [0])[0])


def test_canonical_sum_empty():
    assert canonical_sum(np.array([])) == 0.0


@given(st.lists(finite, min_size=2, max_size=40), st.integers(2, 6))
def test_rowwise_ops_match_one_dimensional(xs, rows):
    # row-wise sort / cumsum / segmented sums must equal their 1-D versions,
    # otherwise batching per-link projections would change results
    cols = len(xs)
    m = np.array([np.array(xs) * (i + 1) for i in range(rows)])
    assert np.array_equal(np.sort(m, axis=1)[0], np.sort(m[0]))
    assert np.array_equal(np.cumsum(m, axis=1)[1], np.cumsum(m[1]))
    starts = np.arange(0, rows * cols, cols, dtype=np.intp)
    flat_sums = segment_sums(m.ravel(), starts)
    for i in range(rows):
        assert flat_sums[i] == canonical_sum(m[i])


@given(st.lists(finite, min_size=1, max_size=50))
def test_segment_mins_single(xs):
    a = np.array(xs)
    assert segment_mins(a, np.array([0], dtype=np.intp))[0] == a.min()
