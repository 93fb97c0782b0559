from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coevolve.core import (
    CodeCandidate,
    ExecutionMatrix,
    PassStats,
    Problem,
    Provenance,
    UnitTest,
    bon_tie_set,
    compute_pass_stats,
    is_saturated,
    non_trivial_best_ut,
    non_trivial_worst_ut,
)


def stats_with_ut_rates(rates, n_codes=4):
    counts = [int(r * n_codes) for r in rates]
    return PassStats(tuple(counts), (0,) * n_codes, n_codes, len(rates))


def test_pass_stats_all_ones():
    s = compute_pass_stats(ExecutionMatrix.from_rows([[1, 1], [1, 1]]))
    assert s.ut_counts == (2, 2) and s.code_counts == (2, 2)
    assert set(s.ut_rates) == {1} and set(s.code_rates) == {1}


def test_pass_stats_hand_summed():
    s = compute_pass_stats(ExecutionMatrix.from_rows([[1, 0], [1, 1]]))
    assert s.ut_counts == (2, 1)
    assert s.code_counts == (1, 2)
    assert s.ut_rates == (Fraction(1), Fraction(1, 2))
    assert s.code_rates == (Fraction(1, 2), Fraction(1))


def test_pass_stats_all_zero():
    s = compute_pass_stats(ExecutionMatrix.from_rows(np.zeros((3, 4))))
    assert s.ut_counts == (0,) * 4 and s.code_counts == (0,) * 3
    assert all(r == 0 for r in s.ut_rates + s.code_rates)


def test_pass_stats_empty_matrix():
    with pytest.raises(ValueError):
        compute_pass_stats(ExecutionMatrix(np.zeros((0, 3), dtype=bool), (), ("a", "b", "c")))


@pytest.mark.parametrize("rates, worst, best", [
    ([0.0, 0.25, 0.5, 1.0], 1, 2),
    ([0.0, 1.0, 1.0], None, None),
    ([0.25, 0.25, 0.5], 0, 2),
    ([0.75, 0.75, 0.25], 2, 0),
    ([1.0, 1.0], None, None),
])
def test_non_trivial_extrema(rates, worst, best):
    s = stats_with_ut_rates(rates)
    assert non_trivial_worst_ut(s) == worst
    assert non_trivial_best_ut(s) == best


@pytest.mark.parametrize("counts, expected", [
    ([3, 5, 5, 2], [1, 2]),
    ([0, 0, 0], [0, 1, 2]),
    ([7], [0]),
])
def test_bon_tie_set(counts, expected):
    s = PassStats((0,), tuple(counts), len(counts), 8)
    assert bon_tie_set(s) == expected


def test_is_saturated():
    assert is_saturated(ExecutionMatrix.from_rows(np.ones((4, 4))))
    m = np.ones((4, 4))
    m[2, 1] = 0
    assert not is_saturated(ExecutionMatrix.from_rows(m))
    assert is_saturated(ExecutionMatrix.from_rows([[1]]))


def test_matrix_roundtrip_and_shape_check():
    m = ExecutionMatrix.from_rows([[1, 0, 1], [0, 0, 1]], ["a", "b"], ["x", "y", "z"])
    d = m.to_dict()
    assert d["bits"] == "101001"
    assert ExecutionMatrix.from_dict(d) == m
    with pytest.raises(ValueError):
        ExecutionMatrix(np.ones((2, 2), dtype=bool), ("a",), ("x", "y"))


def test_domain_type_invariants():
    with pytest.raises(ValueError):
        Problem("", "text")
    with pytest.raises(ValueError):
        CodeCandidate("c0", "   ", Provenance("from_plan"))
    with pytest.raises(ValueError):
        UnitTest("t0", "1", "1", Provenance("random_source"), (4, 3))
    p = Problem("p", "stmt", eval_tests=())
    assert not hasattr(p.public(), "eval_tests")


matrices = st.integers(1, 12).flatmap(
    lambda n: st.integers(1, 12).flatmap(
        lambda m: st.lists(st.lists(st.booleans(), min_size=m, max_size=m), min_size=n, max_size=n)
    )
)


@given(matrices)
def test_conservation(rows):
    s = compute_pass_stats(ExecutionMatrix.from_rows(rows))
    total = sum(sum(r) for r in rows)
    assert sum(s.ut_counts) == sum(s.code_counts) == total


@given(matrices)
def test_extrema_absent_iff_no_interior_rate(rows):
    s = compute_pass_stats(ExecutionMatrix.from_rows(rows))
    interior = [r for r in s.ut_rates if 0 < r < 1]
    assert (non_trivial_worst_ut(s) is None) == (not interior)
    assert (non_trivial_best_ut(s) is None) == (not interior)
    if len(set(interior)) > 1:
        assert s.ut_rates[non_trivial_worst_ut(s)] < s.ut_rates[non_trivial_best_ut(s)]


@given(st.lists(st.integers(0, 20), min_size=1, max_size=20), st.integers(0, 10))
def test_tie_set_shift_invariant(counts, shift):
    a = PassStats((0,), tuple(counts), len(counts), 40)
    b = PassStats((0,), tuple(c + shift for c in counts), len(counts), 40)
    assert bon_tie_set(a) == bon_tie_set(b)


@given(matrices)
def test_tie_set_invariant_under_column_duplication(rows):
    m = np.asarray(rows, dtype=bool)
    a = compute_pass_stats(ExecutionMatrix.from_rows(m))
    b = compute_pass_stats(ExecutionMatrix.from_rows(np.concatenate([m, m], axis=1)))
    assert bon_tie_set(a) == bon_tie_set(b)
