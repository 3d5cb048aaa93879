import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaosbsde.multiindex import (
    MultiIndex,
    build_index_set,
    pad_index,
    truncate_prefix,
)


def test_reference_counts():
    assert build_index_set(3, 60, 1).size == 39_711
    assert build_index_set(6, 20, 1).size == 230_230


def test_zero_order_single_index():
    s = build_index_set(0, 5, 3)
    assert s.size == 1
    assert s.unrank(0).total == 0


@pytest.mark.parametrize("P,M,d", [(2, 3, 1), (3, 4, 2), (1, 2, 3), (5, 2, 1), (4, 1, 2)])
def test_size_matches_binomial(P, M, d):
    assert build_index_set(P, M, d).size == math.comb(P + d * M, d * M)


@pytest.mark.parametrize("P,M,d", [(3, 4, 1), (2, 3, 2), (4, 2, 2)])
def test_rank_unrank_bijection(P, M, d):
    s = build_index_set(P, M, d)
    seen = set()
    for r in range(s.size):
        a = s.unrank(r)
        assert s.rank(a) == r
        seen.add(a.degrees.tobytes())
    assert len(seen) == s.size


@settings(max_examples=25, deadline=None)
@given(P=st.integers(0, 4), M=st.integers(1, 5), d=st.integers(1, 2))
def test_rank_unrank_roundtrip_property(P, M, d):
    s = build_index_set(P, M, d)
    for r in range(0, s.size, max(1, s.size // 50)):
        assert s.rank(s.unrank(r)) == r


def test_graded_lex_order():
    s = build_index_set(3, 3, 1)
    totals = s.totals
    assert (np.diff(totals) >= 0).all()
    assert totals[0] == 0
    for k in range(1, 4):
        g0, g1 = s.grade_starts[k], s.grade_starts[k + 1]
        block = s.degrees[g0:g1]
        for i in range(block.shape[0] - 1):
            assert tuple(block[i]) < tuple(block[i + 1])


def test_weights_exact():
    s = build_index_set(6, 3, 2)
    for r in range(s.size):
        a = s.unrank(r)
        exact = 1
        for entry in a.degrees.reshape(-1):
            exact *= math.factorial(int(entry))
        assert s.weights[r] == float(exact)
        assert np.exp(s.log_weights[r]) == pytest.approx(exact, rel=1e-12)


def test_size_cap_names_count():
    with pytest.raises(ValueError, match="39711|39,711"):
        build_index_set(3, 60, 1, size_cap=10_000)


def test_pad_index():
    a = MultiIndex(np.array([[2, 1]]))
    padded = pad_index(a, 4)
    np.testing.assert_array_equal(padded.degrees, [[2, 1, 0, 0]])
    assert padded.total == a.total

    zero = MultiIndex(np.zeros((2, 3), dtype=int))
    np.testing.assert_array_equal(pad_index(zero, 5).degrees, np.zeros((2, 5)))

    same = pad_index(MultiIndex(np.array([[0, 3]])), 2)
    np.testing.assert_array_equal(same.degrees, [[0, 3]])


def test_pad_index_shrink_rejected():
    with pytest.raises(ValueError):
        pad_index(MultiIndex(np.array([[1, 1, 0]])), 2)


def test_truncate_prefix():
    a = MultiIndex(np.array([[2, 1, 3]]))
    np.testing.assert_array_equal(truncate_prefix(a, 2).degrees, [[2, 1, 0]])
    np.testing.assert_array_equal(truncate_prefix(a, 3).degrees, [[2, 1, 3]])
    zero = MultiIndex(np.zeros((1, 4), dtype=int))
    np.testing.assert_array_equal(truncate_prefix(zero, 2).degrees, zero.degrees)


def test_truncate_prefix_range_checked():
    a = MultiIndex(np.array([[1, 0]]))
    with pytest.raises(ValueError):
        truncate_prefix(a, 0)
    with pytest.raises(ValueError):
        truncate_prefix(a, 3)


def test_multi_coordinate_layout():
    s = build_index_set(2, 2, 2)
    # flat layout is coordinate-major: [a^1_1, a^1_2, a^2_1, a^2_2]
    a = MultiIndex(np.array([[1, 0], [0, 1]]))
    r = s.rank(a)
    np.testing.assert_array_equal(s.degrees[r], [1, 0, 0, 1])


def test_build_graph_parents_precede():
    s = build_index_set(4, 3, 2)
    parent, pos, deg = s.build_graph()
    ranks = np.arange(1, s.size)
    assert (parent < ranks).all()
    rebuilt = s.degrees[parent].astype(np.int64)
    rebuilt[np.arange(rebuilt.shape[0]), pos] += deg
    np.testing.assert_array_equal(rebuilt, s.degrees[1:])
