import itertools

import numpy as np
import pytest

from latinavoid.coloring import (
    ConflictGraph,
    ListAssignment,
    build_conflict_graph,
    build_lists,
    build_R_and_merge,
    list_edge_color_bounded,
)
from latinavoid.core import AvoidanceArray, PartialLatinSquare, mask_of, validate_pls
from latinavoid.errors import ColoringFailed, MergeClash
from latinavoid.starting import build_even


def _assert_bounded_coloring(G, lists, colors, f):
    assert len(colors) == len(G.edges)
    used_at = {}
    class_size = {}
    for (i, j), color in zip(G.edges, colors):
        assert lists.masks[G.edges.index((i, j))] >> (color - 1) & 1
        assert color not in used_at.get(("r", i), set())
        assert color not in used_at.get(("c", j), set())
        used_at.setdefault(("r", i), set()).add(color)
        used_at.setdefault(("c", j), set()).add(color)
        class_size[color] = class_size.get(color, 0) + 1
    assert all(v <= f for v in class_size.values())


class TestBuildConflictGraph:
    def test_empty_array_no_edges(self):
        L0 = build_even(6)
        G = build_conflict_graph(L0, AvoidanceArray.empty(6), PartialLatinSquare.empty(6))
        assert G.edges == ()

    def test_single_conflict(self):
        L0 = build_even(6)
        s = int(L0.square.get(2, 3))
        A = AvoidanceArray.from_sets(6, {(2, 3): {s}})
        G = build_conflict_graph(L0, A, PartialLatinSquare.empty(6))
        assert G.edges == ((2, 3),)

    def test_prescribed_cells_excluded(self):
        L0 = build_even(6)
        s = int(L0.square.get(2, 3))
        A = AvoidanceArray.from_sets(6, {(2, 3): {s}})
        P = PartialLatinSquare.from_cells(6, {(2, 3): (s % 6) + 1})
        G = build_conflict_graph(L0, A, P)
        assert G.edges == ()


class TestBuildLists:
    def test_unconstrained_lists_are_full(self):
        G = ConflictGraph(5, ((1, 2),))
        lists = build_lists(G, AvoidanceArray.empty(5), PartialLatinSquare.empty(5))
        assert lists.masks[0] == (1 << 5) - 1

    def test_subtraction_example(self):
        G = ConflictGraph(5, ((1, 2),))
        A = AvoidanceArray.from_sets(5, {(1, 2): {3}})
        P = PartialLatinSquare.from_cells(5, {(1, 4): 4})
        lists = build_lists(G, A, P)
        assert lists.masks[0] == mask_of({1, 2, 5})

    def test_column_entries_excluded_too(self):
        G = ConflictGraph(5, ((1, 2),))
        P = PartialLatinSquare.from_cells(5, {(3, 2): 5})
        lists = build_lists(G, AvoidanceArray.empty(5), P)
        assert lists.masks[0] == mask_of({1, 2, 3, 4})


class TestBoundedColoring:
    def test_single_edge_singleton_list(self):
        G = ConflictGraph(7, ((1, 1),))
        lists = ListAssignment(7, (mask_of({7}),))
        assert list_edge_color_bounded(G, lists, 1) == (7,)

    def test_two_adjacent_edges_forced_distinct(self):
        G = ConflictGraph(3, ((1, 1), (1, 2)))
        lists = ListAssignment(3, (mask_of({1, 2}), mask_of({1, 2})))
        colors = list_edge_color_bounded(G, lists, 2)
        assert sorted(colors) == [1, 2]

    @pytest.mark.parametrize("c", [2, 3, 4])
    def test_star_with_unit_multiplicity(self, c):
        # a star of c edges with f=1: all colors distinct; cross-check by
        # brute force that a valid assignment exists for every list system
        rng = np.random.default_rng(c)
        n = 6
        edges = tuple((1, j + 1) for j in range(c))
        masks = tuple(mask_of(set(int(s) for s in rng.choice(n, c + 1, replace=False) + 1)) for _ in range(c))
        G = ConflictGraph(n, edges)
        lists = ListAssignment(n, masks)
        colors = list_edge_color_bounded(G, lists, 1)
        assert len(set(colors)) == c
        # brute force: some system of distinct representatives exists
        symbol_sets = [
            [s for s in range(1, n + 1) if m >> (s - 1) & 1] for m in masks
        ]
        assert any(
            len(set(pick)) == c for pick in itertools.product(*symbol_sets)
        )
        _assert_bounded_coloring(G, lists, colors, 1)

    def test_multiplicity_forces_recolor(self):
        # 4 disjoint edges, lists {1,2}, f=2: some color would be used 4x
        # greedily without the quota logic
        G = ConflictGraph(8, ((1, 1), (2, 2), (3, 3), (4, 4)))
        lists = ListAssignment(8, (mask_of({1, 2}),) * 4)
        colors = list_edge_color_bounded(G, lists, 2)
        _assert_bounded_coloring(G, lists, colors, 2)

    def test_impossible_quota_fails(self):
        G = ConflictGraph(8, ((1, 1), (2, 2), (3, 3)))
        lists = ListAssignment(8, (mask_of({5}),) * 3)
        with pytest.raises(ColoringFailed):
            list_edge_color_bounded(G, lists, 2)

    def test_random_graphs_contract(self):
        rng = np.random.default_rng(42)
        n = 30
        for _ in range(20):
            edges = set()
            deg_r = [0] * (n + 1)
            deg_c = [0] * (n + 1)
            while len(edges) < 40:
                i, j = int(rng.integers(1, n + 1)), int(rng.integers(1, n + 1))
                if deg_r[i] < 4 and deg_c[j] < 4 and (i, j) not in edges:
                    edges.add((i, j))
                    deg_r[i] += 1
                    deg_c[j] += 1
            G = ConflictGraph(n, tuple(sorted(edges)))
            masks = tuple(
                mask_of(set(int(s) for s in rng.choice(n, 12, replace=False) + 1))
                for _ in G.edges
            )
            lists = ListAssignment(n, masks)
            colors = list_edge_color_bounded(G, lists, 3, rng)
            _assert_bounded_coloring(G, lists, colors, 3)


class TestMerge:
    def test_no_edges_returns_p(self):
        P = PartialLatinSquare.from_cells(4, {(1, 1): 2})
        G = ConflictGraph(4, ())
        assert build_R_and_merge(G, (), P) == P

    def test_single_recolored_cell(self):
        G = ConflictGraph(4, ((2, 3),))
        merged = build_R_and_merge(G, (5 % 5,), PartialLatinSquare.empty(4))
        assert merged.get(2, 3) == 0 or merged.get(2, 3) == 5 % 5
        merged = build_R_and_merge(G, (1,), PartialLatinSquare.empty(4))
        assert merged.get(2, 3) == 1 and merged.filled_count() == 1

    def test_collision_raises(self):
        G = ConflictGraph(4, ((1, 1),))
        P = PartialLatinSquare.from_cells(4, {(1, 1): 2})
        with pytest.raises(MergeClash):
            build_R_and_merge(G, (3,), P)

    def test_pipeline_merge_bounds(self, desk_params):
        # merged P-hat respects the row/column and symbol bounds on a
        # well-formed instance
        from latinavoid.gen import RandomArrayModel, RandomPlsModel, random_array, random_pls

        n = 40
        rng = np.random.default_rng(12)
        P = random_pls(RandomPlsModel(n, 0.02), rng)
        A = random_array(RandomArrayModel(n, 1), rng, P)
        L0 = build_even(n)
        G = build_conflict_graph(L0, A, P)
        lists = build_lists(G, A, P)
        f_n = desk_params.f_of_n(n)
        colors = list_edge_color_bounded(G, lists, f_n, rng)
        merged = build_R_and_merge(G, colors, P)
        assert validate_pls(merged).ok
        # per-line counts grow by at most the conflict degree, per-symbol
        # counts by at most the multiplicity bound f(n)
        for axis in (0, 1):
            p_counts = np.count_nonzero(P.grid, axis=axis)
            m_counts = np.count_nonzero(merged.grid, axis=axis)
            deg = np.zeros(n, dtype=int)
            for (i, j) in G.edges:
                deg[(j if axis == 0 else i) - 1] += 1
            assert np.all(m_counts <= p_counts + deg)
        p_sym = np.bincount(P.grid[P.grid != 0], minlength=n + 1)
        m_sym = np.bincount(merged.grid[merged.grid != 0], minlength=n + 1)
        assert np.all(m_sym <= p_sym + f_n)
        # recolored entries dodge the array
        for (i, j), color in zip(G.edges, colors):
            assert not A.contains(i, j, color)
