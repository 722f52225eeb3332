"""Stage 3: recolor residual conflicts into extra prescriptions.

The conflict cells of the starting square with the permuted array form a
bipartite graph on rows x columns. A proper list edge coloring with a cap
on the per-color multiplicity turns each conflict cell into a fresh
prescribed entry that no longer collides with the array; merging those
entries with the permuted PLS gives the target P-hat that the fix stage chases.

Coloring is greedy in a seeded-random edge order (least-used admissible
color first). If an edge cannot be placed within quota it is placed
properly anyway and a recoloring pass moves edges out of over-used
colors; each move targets a color strictly below quota, so the
over-quota mass strictly decreases and the pass terminates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AvoidanceArray, PartialLatinSquare, validate_pls
from .errors import ColoringFailed, MergeClash
from .starting import StartingSquare


@dataclass(frozen=True)
class ConflictGraph:
    """Rows and columns as vertex sides, one edge per recolorable conflict."""

    n: int
    edges: tuple[tuple[int, int], ...]  # (row, col), 1-based

    def max_degree(self) -> int:
        if not self.edges:
            return 0
        rows = np.zeros(self.n + 1, dtype=int)
        cols = np.zeros(self.n + 1, dtype=int)
        for r, c in self.edges:
            rows[r] += 1
            cols[c] += 1
        return int(max(rows.max(), cols.max()))


@dataclass(frozen=True)
class ListAssignment:
    """Per-edge admissible color sets, as bitmasks parallel to the edges."""

    n: int
    masks: tuple[int, ...]

    def size(self, e: int) -> int:
        return self.masks[e].bit_count()

    def min_size(self) -> int:
        return min((m.bit_count() for m in self.masks), default=0)


def build_conflict_graph(
    L0: StartingSquare, A: AvoidanceArray, P: PartialLatinSquare
) -> ConflictGraph:
    """One edge per cell where the starting square conflicts with A and P
    is empty (conflicts on prescribed cells are handled by the fix stage)."""
    n = L0.n
    g = L0.square.grid
    edges = []
    for r in range(n):
        row_masks = A.masks[r]
        for c in range(n):
            if row_masks[c] >> (int(g[r, c]) - 1) & 1 and not P.grid[r, c]:
                edges.append((r + 1, c + 1))
    return ConflictGraph(n, tuple(edges))


def build_lists(
    G: ConflictGraph, A: AvoidanceArray, P: PartialLatinSquare
) -> ListAssignment:
    """c is admissible on edge (i,j) iff c is not forbidden there and is
    absent from row i and column j of P."""
    n = G.n
    full = (1 << n) - 1
    row_used = [0] * (n + 1)
    col_used = [0] * (n + 1)
    for (r, c), s in P.cells():
        bit = 1 << (s - 1)
        row_used[r] |= bit
        col_used[c] |= bit
    masks = []
    for i, j in G.edges:
        masks.append(full & ~A.mask(i, j) & ~row_used[i] & ~col_used[j])
    return ListAssignment(n, tuple(masks))


def list_edge_color_bounded(
    G: ConflictGraph,
    lists: ListAssignment,
    f: int,
    rng: np.random.Generator | None = None,
    restarts: int = 8,
) -> tuple[int, ...]:
    """A proper in-list coloring with every color used at most f times.

    Raises ColoringFailed when greedy plus recoloring exhausts its
    restarts (parameters outside the workable regime).
    """
    if f < 1:
        raise ColoringFailed("multiplicity bound must be at least 1")
    m = len(G.edges)
    if m == 0:
        return ()
    if rng is None:
        rng = np.random.default_rng(0)
    n = G.n
    for _ in range(restarts):
        order = list(range(m))
        rng.shuffle(order)
        colors: list[int] = [0] * m
        class_size = [0] * (n + 1)
        row_used = [0] * (n + 1)
        col_used = [0] * (n + 1)

        def place(e: int, color: int) -> None:
            i, j = G.edges[e]
            bit = 1 << (color - 1)
            colors[e] = color
            class_size[color] += 1
            row_used[i] |= bit
            col_used[j] |= bit

        def unplace(e: int) -> None:
            i, j = G.edges[e]
            color = colors[e]
            bit = 1 << (color - 1)
            colors[e] = 0
            class_size[color] -= 1
            row_used[i] &= ~bit
            col_used[j] &= ~bit

        def admissible(e: int, cap: int) -> int | None:
            """Least-used admissible color with class size <= cap."""
            i, j = G.edges[e]
            mask = lists.masks[e] & ~row_used[i] & ~col_used[j]
            best = None
            s = 1
            while mask:
                if mask & 1 and class_size[s] <= cap:
                    if best is None or class_size[s] < class_size[best]:
                        best = s
                mask >>= 1
                s += 1
            return best

        ok = True
        for e in order:
            color = admissible(e, f - 1)
            if color is None:
                color = admissible(e, 1 << 30)  # proper only; fix later
            if color is None:
                ok = False
                break
            place(e, color)
        if not ok:
            continue

        # recoloring pass: strictly shrink the over-quota mass
        stuck = False
        while not stuck:
            over = [s for s in range(1, n + 1) if class_size[s] > f]
            if not over:
                return tuple(colors)
            moved = False
            for s in sorted(over, key=lambda s: -class_size[s]):
                for e in range(m):
                    if colors[e] != s:
                        continue
                    unplace(e)
                    target = admissible(e, f - 1)
                    if target is not None:
                        place(e, target)
                        moved = True
                        break
                    place(e, s)
                if moved:
                    break
            if not moved:
                stuck = True
    raise ColoringFailed(
        f"no bounded coloring found for {m} edges with f={f} "
        f"(min list {lists.min_size()}, max degree {G.max_degree()})"
    )


def build_R_and_merge(
    G: ConflictGraph, coloring: tuple[int, ...], P: PartialLatinSquare
) -> PartialLatinSquare:
    """Place each edge's color at its cell and merge with P into P-hat."""
    grid = P.grid.copy()
    for (r, c), color in zip(G.edges, coloring):
        if grid[r - 1, c - 1]:
            raise MergeClash(f"recolored cell ({r},{c}) collides with P")
        grid[r - 1, c - 1] = color
    merged = PartialLatinSquare(grid)
    report = validate_pls(merged)
    if not report.ok:
        raise MergeClash(
            "merged PLS is invalid (coloring bug): " + "; ".join(report.problems)
        )
    return merged
