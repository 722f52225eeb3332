import numpy as np
import pytest

from latinavoid.core import Cell, LatinSquare, validate_pls
from latinavoid.errors import ConstructionFailed, EvenOrder, OddOrder
from latinavoid.starting import (
    build_even,
    build_odd,
    find_transversal,
    is_transversal,
    strong_intercalate_census,
)

from conftest import naive_strong_census, random_latin_square


class TestBuildEven:
    def test_n4_rows(self):
        M = build_even(4).square
        assert M.grid.tolist() == [
            [1, 2, 3, 4],
            [2, 1, 4, 3],
            [3, 4, 1, 2],
            [4, 3, 2, 1],
        ]

    def test_n2(self):
        assert build_even(2).square.grid.tolist() == [[1, 2], [2, 1]]

    def test_no_exceptional_cells(self):
        assert build_even(10).exceptional_cells == frozenset()

    def test_odd_order_rejected(self):
        with pytest.raises(OddOrder):
            build_even(5)

    @pytest.mark.parametrize("n", [4, 8, 12, 20])
    def test_block_transposes(self, n):
        g = build_even(n).square.grid
        r = n // 2
        m11 = g[:r, :r]
        m12 = g[:r, r:]
        assert np.array_equal(g[r:, :r], m12.T)
        assert np.array_equal(g[r:, r:], m11.T)
        assert np.array_equal(m12, m11 + r)

    @pytest.mark.parametrize("n", [2, 4, 6, 10, 16])
    def test_census_exactly_half_n(self, n):
        counts = strong_intercalate_census(build_even(n).square)
        assert np.all(counts == n // 2)


class TestCensus:
    def test_cyclic_order3_has_none(self):
        counts = strong_intercalate_census(LatinSquare.cyclic(3))
        assert np.all(counts == 0)

    def test_order2(self):
        counts = strong_intercalate_census(LatinSquare([[1, 2], [2, 1]]))
        assert np.all(counts == 1)

    @pytest.mark.parametrize("n", [3, 5, 6, 7, 8, 10])
    def test_matches_naive_oracle(self, n, rng):
        for _ in range(3):
            L = random_latin_square(n, rng)
            fast = strong_intercalate_census(L)
            naive = naive_strong_census(L.grid.astype(int))
            assert np.array_equal(fast, naive)

    def test_matches_naive_on_prolonged_square(self):
        S = build_odd(9, slack=None)
        fast = strong_intercalate_census(S.square)
        naive = naive_strong_census(S.square.grid.astype(int))
        assert np.array_equal(fast, naive)


class TestTransversals:
    @pytest.mark.parametrize("n", [4, 8, 20, 40])
    def test_search_finds_one_for_r_even(self, n):
        base = build_even(n).square.grid.astype(np.int32)
        sig = find_transversal(base, np.random.default_rng(0))
        assert sig is not None and is_transversal(base, sig)

    @pytest.mark.parametrize("n", [8, 20, 200, 424])
    def test_formula_transversal(self, n):
        from latinavoid.starting import _formula_transversal

        base = build_even(n).square.grid.astype(np.int32)
        sig = _formula_transversal(n // 2)
        assert sig is not None and is_transversal(base, sig)

    def test_none_in_order_six_base(self):
        base = build_even(6).square.grid.astype(np.int32)
        assert find_transversal(base, np.random.default_rng(0), restarts=10) is None


class TestBuildOdd:
    def test_even_order_rejected(self):
        with pytest.raises(EvenOrder):
            build_odd(4)

    def test_n3_any_square_qualifies(self):
        S = build_odd(3)
        assert len(S.exceptional_cells) == 9  # budget 16 covers all cells
        assert validate_pls(S.square).ok

    @pytest.mark.parametrize("n", [5, 9, 21, 51])
    def test_auto_slack_certificate(self, n):
        S = build_odd(n, slack=None)
        budget = 3 * n + 7
        assert len(S.exceptional_cells) <= budget
        counts = strong_intercalate_census(S.square)
        threshold = n // 2 - S.census_slack
        below = {
            Cell(r + 1, c + 1)
            for r, c in zip(*np.nonzero(counts < threshold))
        }
        assert below <= S.exceptional_cells
        # the full last row and column are always recorded exceptional
        for k in range(1, n + 1):
            assert Cell(n, k) in S.exceptional_cells
            assert Cell(k, n) in S.exceptional_cells

    def test_spec_strict_slack_fails_at_nine(self):
        # The zero-slack census certificate is not attainable by the
        # transversal-prolongation family this module implements; the
        # acceptance suite documents this as an expected red criterion.
        with pytest.raises(ConstructionFailed):
            build_odd(9, slack=0)

    def test_deterministic(self):
        a = build_odd(9, slack=None)
        b = build_odd(9, slack=None)
        assert a.square == b.square
        assert a.exceptional_cells == b.exceptional_cells
