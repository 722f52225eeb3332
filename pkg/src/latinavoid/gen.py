"""Instance generators: random models and the blocked infeasibility family.

The random PLS model fills cells independently and then de-duplicates
rows (keeping the right-most occurrence, as the model prescribes) and
columns (same rule, keeping the bottom-most; the row-only rule can leave
column duplicates, which downstream code cannot accept).

The blocked family places three forbidden-symbol blocks on the diagonal
of an order-(3r+2) array; peeling t transversal layers off its companion
PLS yields (P, A) pairs with no restricted completion, certified by the
exact oracle in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AvoidanceArray, Cell, PartialLatinSquare
from .errors import InvalidInput


@dataclass(frozen=True)
class RandomPlsModel:
    n: int
    p: float

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise InvalidInput(f"fill probability {self.p} outside [0,1]")


@dataclass(frozen=True)
class RandomArrayModel:
    n: int
    m: int

    def __post_init__(self):
        if not 0 <= self.m <= self.n:
            raise InvalidInput(f"set size {self.m} outside [0, n]")


@dataclass(frozen=True)
class FrontierPoint:
    r: int
    t: int

    def __post_init__(self):
        if self.r < 1:
            raise InvalidInput("r must be >= 1")
        if not 1 <= self.t <= self.r + 1:
            raise InvalidInput(f"t={self.t} outside 1..r+1")

    @property
    def n(self) -> int:
        return 3 * self.r + 2


def random_pls(model: RandomPlsModel, rng: np.random.Generator) -> PartialLatinSquare:
    """Independent cells, then keep-last de-duplication in rows and columns."""
    n = model.n
    grid = np.zeros((n, n), dtype=np.int32)
    fill = rng.random((n, n)) < model.p
    syms = rng.integers(1, n + 1, size=(n, n))
    grid[fill] = syms[fill]
    # rows: for a repeated symbol keep only the maximal-column occurrence
    for r in range(n):
        seen = set()
        for c in range(n - 1, -1, -1):
            s = int(grid[r, c])
            if not s:
                continue
            if s in seen:
                grid[r, c] = 0
            else:
                seen.add(s)
    # same rule down each column, keeping the maximal-row occurrence
    for c in range(n):
        seen = set()
        for r in range(n - 1, -1, -1):
            s = int(grid[r, c])
            if not s:
                continue
            if s in seen:
                grid[r, c] = 0
            else:
                seen.add(s)
    return PartialLatinSquare(grid)


def random_array(
    model: RandomArrayModel,
    rng: np.random.Generator,
    P: PartialLatinSquare | None = None,
) -> AvoidanceArray:
    """Independent uniform m-subsets per cell; P's entries are removed."""
    n = model.n
    if P is not None and P.n != n:
        raise InvalidInput("order mismatch between model and P")
    masks = [[0] * n for _ in range(n)]
    if model.m:
        for r in range(n):
            for c in range(n):
                picks = rng.choice(n, size=model.m, replace=False)
                m = 0
                for s in picks:
                    m |= 1 << int(s)
                masks[r][c] = m
    if P is not None:
        for (r, c), s in P.cells():
            masks[r - 1][c - 1] &= ~(1 << (s - 1))
    return AvoidanceArray(n, masks)


def blocked_array_E1(r: int, variant: str = "corrected") -> AvoidanceArray:
    """Three diagonal blocks of forbidden sets on an order-(3r+2) array.

    Block A: (r+1)x(r+1) cells {1..r+1} top left; block B: (r+1)x(r+1)
    cells {r+2..2r+2} in the middle; block C: r x r bottom right. The
    literal variant gives C the range {2r+2..3r+2} as printed in the
    source construction, which overlaps block B's range and makes the
    companion PLS collide with it; the corrected variant {2r+3..3r+2} is
    the default.
    """
    if r < 1:
        raise InvalidInput("r must be >= 1")
    if variant not in ("corrected", "literal"):
        raise InvalidInput(f"unknown variant {variant!r}")
    n = 3 * r + 2
    a_mask = sum(1 << (s - 1) for s in range(1, r + 2))
    b_mask = sum(1 << (s - 1) for s in range(r + 2, 2 * r + 3))
    c_lo = 2 * r + 2 if variant == "literal" else 2 * r + 3
    c_mask = sum(1 << (s - 1) for s in range(c_lo, 3 * r + 3))
    masks = [[0] * n for _ in range(n)]
    for i in range(r + 1):
        for j in range(r + 1):
            masks[i][j] = a_mask
            masks[r + 1 + i][r + 1 + j] = b_mask
    for i in range(r):
        for j in range(r):
            masks[2 * r + 2 + i][2 * r + 2 + j] = c_mask
    return AvoidanceArray(n, masks)


@dataclass(frozen=True)
class TransversalBlock:
    """An s x s cyclic block over an ordered symbol set, partitioned into
    s disjoint broken diagonals T_1..T_s (true transversals when s is odd)."""

    symbols: tuple[int, ...]
    grid: tuple[tuple[int, ...], ...]
    transversals: tuple[tuple[Cell, ...], ...]


def transversal_decomposed_square(symbols) -> TransversalBlock:
    """Cyclic block: cell (i,j) carries the ((i+j-2) mod s)-th symbol;
    T_j is the j-th broken diagonal {(i,c): c-i = j-1 mod s}."""
    symbols = tuple(symbols)
    s = len(symbols)
    if s < 1:
        raise InvalidInput("need at least one symbol")
    grid = tuple(
        tuple(symbols[(i + j - 2) % s] for j in range(1, s + 1))
        for i in range(1, s + 1)
    )
    transversals = tuple(
        tuple(Cell(i, (i - 1 + j - 1) % s + 1) for i in range(1, s + 1))
        for j in range(1, s + 1)
    )
    return TransversalBlock(symbols, grid, transversals)


def infeasible_pair(
    point: FrontierPoint, variant: str = "corrected"
) -> tuple[PartialLatinSquare, AvoidanceArray]:
    """The (P, A) pair at a frontier point: P keeps the first t transversal
    layers of the three companion blocks, A is the blocked array emptied
    exactly on P's support. P avoids A cell-wise; no completion of P
    avoids A (oracle-certified in the tests for small r)."""
    r, t = point.r, point.t
    n = point.n
    s1 = (r + 2,) + tuple(range(2 * r + 3, 3 * r + 3))
    s2 = tuple(range(1, r + 2))
    s3 = tuple(range(r + 3, 2 * r + 3))
    blocks = [
        (transversal_decomposed_square(s1), 0),
        (transversal_decomposed_square(s2), r + 1),
        (transversal_decomposed_square(s3), 2 * r + 2),
    ]
    cells: dict[tuple[int, int], int] = {}
    for block, offset in blocks:
        depth = min(t, len(block.transversals))  # T_{3, r+1} is empty
        for j in range(depth):
            for (i, c) in block.transversals[j]:
                cells[(offset + i, offset + c)] = block.grid[i - 1][c - 1]
    P = PartialLatinSquare.from_cells(n, cells)
    E1 = blocked_array_E1(r, variant=variant)
    masks = [list(row) for row in E1.masks]
    for (i, c) in cells:
        masks[i - 1][c - 1] = 0
    A = AvoidanceArray(n, masks)
    return P, A
