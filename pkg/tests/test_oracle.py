import numpy as np
import pytest

from latinavoid.core import AvoidanceArray, PartialLatinSquare, verify_solution
from latinavoid.errors import InvalidInput
from latinavoid.oracle import SearchLimits, count_exact, solve_exact


class TestSolveExact:
    def test_single_forbidden_cell_infeasible(self):
        P = PartialLatinSquare.empty(1)
        A = AvoidanceArray.from_sets(1, {(1, 1): {1}})
        assert solve_exact(P, A).status == "infeasible"

    def test_order_two_solves(self):
        res = solve_exact(PartialLatinSquare.empty(2), AvoidanceArray.empty(2))
        assert res.status == "solved"
        assert verify_solution(
            res.square, PartialLatinSquare.empty(2), AvoidanceArray.empty(2)
        ).clean

    def test_avoidance_drives_choice(self):
        A = AvoidanceArray.from_sets(2, {(1, 1): {1}})
        res = solve_exact(PartialLatinSquare.empty(2), A)
        assert res.square.grid.tolist() == [[2, 1], [1, 2]]

    def test_prescriptions_respected(self):
        P = PartialLatinSquare.from_cells(4, {(1, 1): 3, (2, 2): 3, (4, 4): 1})
        A = AvoidanceArray.from_sets(4, {(3, 3): {3}})
        res = solve_exact(P, A)
        assert res.status == "solved"
        assert verify_solution(res.square, P, A).clean

    def test_invalid_pls_rejected(self):
        P = PartialLatinSquare.from_cells(2, {(1, 1): 1, (1, 2): 1})
        with pytest.raises(InvalidInput):
            solve_exact(P, AvoidanceArray.empty(2))

    def test_limit_reported(self):
        res = solve_exact(
            PartialLatinSquare.empty(7),
            AvoidanceArray.empty(7),
            SearchLimits(max_nodes=1),
        )
        assert res.status in ("solved", "limit")  # tiny budget may still hit a
        # propagation-only solution; at n=7 it cannot
        assert res.status == "limit" or res.nodes <= 1

    def test_deterministic(self):
        A = AvoidanceArray.from_sets(5, {(1, 1): {1, 2}, (3, 4): {5}})
        a = solve_exact(PartialLatinSquare.empty(5), A)
        b = solve_exact(PartialLatinSquare.empty(5), A)
        assert a.square == b.square


class TestCountExact:
    def test_order_two(self):
        assert count_exact(PartialLatinSquare.empty(2), AvoidanceArray.empty(2)).count == 2

    def test_order_two_with_avoidance(self):
        A = AvoidanceArray.from_sets(2, {(1, 1): {1}})
        assert count_exact(PartialLatinSquare.empty(2), A).count == 1

    def test_order_three(self):
        assert count_exact(PartialLatinSquare.empty(3), AvoidanceArray.empty(3)).count == 12

    def test_order_four(self):
        assert count_exact(PartialLatinSquare.empty(4), AvoidanceArray.empty(4)).count == 576

    def test_symbol_relabeling_equivariance(self, rng):
        # relabeling symbols by a permutation and transforming A alike
        # preserves the count
        n = 4
        cells = {}
        for _ in range(5):
            r, c = int(rng.integers(1, n + 1)), int(rng.integers(1, n + 1))
            cells.setdefault((r, c), set()).add(int(rng.integers(1, n + 1)))
        A = AvoidanceArray.from_sets(n, cells)
        base = count_exact(PartialLatinSquare.empty(n), A).count
        perm = list(rng.permutation(n) + 1)
        relabeled = {
            (r, c): {perm[s - 1] for s in syms} for (r, c), syms in cells.items()
        }
        A2 = AvoidanceArray.from_sets(n, relabeled)
        assert count_exact(PartialLatinSquare.empty(n), A2).count == base

    def test_limit_status(self):
        res = count_exact(
            PartialLatinSquare.empty(5),
            AvoidanceArray.empty(5),
            SearchLimits(max_nodes=10),
        )
        assert res.status == "limit"
