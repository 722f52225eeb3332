"""Domain types for squares, arrays, intercalates, and trades.

Conventions used throughout the package:

* rows, columns, and symbols are 1-based in the public API (cell (1,1) is
  the top-left corner, symbols live in 1..n);
* the numpy grids backing squares are indexed 0-based and store symbol
  values 1..n, with 0 meaning "empty";
* symbol sets are stored as integer bitmasks where bit (s-1) is symbol s.

All types here are immutable after construction and every operation is a
pure function, so they are safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    InvalidInput,
    NotAnIntercalate,
    NotLatinAfterTrade,
    OldMismatch,
)

Symbol = int


class Cell(NamedTuple):
    """A 1-based (row, column) position."""

    row: int
    col: int


def _dtype_for(n: int):
    return np.int16 if n < 2**15 - 1 else np.int32


def _freeze(grid: np.ndarray) -> np.ndarray:
    grid.flags.writeable = False
    return grid


def mask_of(symbols) -> int:
    """Bitmask with bit (s-1) set for every symbol s in the iterable."""
    m = 0
    for s in symbols:
        m |= 1 << (s - 1)
    return m


def symbols_of(mask: int) -> frozenset[int]:
    """Inverse of :func:`mask_of`."""
    out = []
    s = 1
    while mask:
        if mask & 1:
            out.append(s)
        mask >>= 1
        s += 1
    return frozenset(out)


class PartialLatinSquare:
    """An n x n grid whose cells are empty or hold one symbol of [n].

    No symbol may repeat within a row or column; construction does not
    enforce that (so broken grids can be inspected), ``validate_pls``
    reports violations.
    """

    __slots__ = ("n", "_grid")

    def __init__(self, grid: np.ndarray):
        grid = np.asarray(grid)
        if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
            raise InvalidInput(f"grid must be square, got shape {grid.shape}")
        n = int(grid.shape[0])
        if grid.size and (grid.min() < 0 or grid.max() > n):
            raise InvalidInput("cell values must lie in 0..n")
        self.n = n
        self._grid = _freeze(grid.astype(_dtype_for(n)))

    @classmethod
    def empty(cls, n: int) -> "PartialLatinSquare":
        return cls(np.zeros((n, n), dtype=_dtype_for(n)))

    @classmethod
    def from_rows(cls, rows) -> "PartialLatinSquare":
        return cls(np.array(rows, dtype=int))

    @classmethod
    def from_cells(cls, n: int, cells: dict) -> "PartialLatinSquare":
        grid = np.zeros((n, n), dtype=_dtype_for(n))
        for (r, c), s in cells.items():
            grid[r - 1, c - 1] = s
        return cls(grid)

    @property
    def grid(self) -> np.ndarray:
        """Read-only numpy view, 0-indexed, 0 = empty."""
        return self._grid

    def get(self, row: int, col: int) -> int:
        """Symbol at a 1-based cell, 0 if empty."""
        return int(self._grid[row - 1, col - 1])

    def with_cell(self, row: int, col: int, symbol: int) -> "PartialLatinSquare":
        grid = self._grid.copy()
        grid[row - 1, col - 1] = symbol
        return type(self)(grid)

    def cells(self) -> Iterator[tuple[Cell, int]]:
        """Non-empty cells as (Cell, symbol) pairs in row-major order."""
        for r, c in zip(*np.nonzero(self._grid)):
            yield Cell(int(r) + 1, int(c) + 1), int(self._grid[r, c])

    def filled_count(self) -> int:
        return int(np.count_nonzero(self._grid))

    def is_complete(self) -> bool:
        return bool(np.all(self._grid != 0))

    def transposed(self) -> "PartialLatinSquare":
        return type(self)(self._grid.T.copy())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PartialLatinSquare)
            and self.n == other.n
            and bool(np.array_equal(self._grid, other._grid))
        )

    def __hash__(self):
        return hash((self.n, self._grid.tobytes()))

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, filled={self.filled_count()})"


class LatinSquare(PartialLatinSquare):
    """A fully filled PLS; every row and column is a permutation of [n]."""

    __slots__ = ()

    def __init__(self, grid: np.ndarray):
        super().__init__(grid)
        if not _rows_cols_are_permutations(self._grid):
            raise InvalidInput("not a Latin square")

    @classmethod
    def cyclic(cls, n: int) -> "LatinSquare":
        """The addition-table square: cell (i,j) holds (i+j-2 mod n)+1."""
        i = np.arange(n)
        return cls((i[:, None] + i[None, :]) % n + 1)


def _rows_cols_are_permutations(grid: np.ndarray) -> bool:
    n = grid.shape[0]
    if n == 0:
        return True
    if grid.min() < 1:
        return False
    expect = np.arange(1, n + 1)
    return bool(
        np.all(np.sort(grid, axis=1) == expect[None, :])
        and np.all(np.sort(grid, axis=0) == expect[:, None])
    )


class AvoidanceArray:
    """An n x n array of forbidden-symbol sets, stored as bitmasks."""

    __slots__ = ("n", "_masks")

    def __init__(self, n: int, masks):
        full = (1 << n) - 1
        rows = []
        for r in range(n):
            row = tuple(int(m) for m in masks[r])
            if len(row) != n or any(m & ~full for m in row):
                raise InvalidInput("mask row malformed or symbol out of range")
            rows.append(row)
        self.n = n
        self._masks = tuple(rows)

    @classmethod
    def empty(cls, n: int) -> "AvoidanceArray":
        return cls(n, [[0] * n for _ in range(n)])

    @classmethod
    def from_sets(cls, n: int, cells: dict) -> "AvoidanceArray":
        masks = [[0] * n for _ in range(n)]
        for (r, c), syms in cells.items():
            masks[r - 1][c - 1] = mask_of(syms)
        return cls(n, masks)

    @property
    def masks(self) -> tuple:
        """Row-major tuple of tuples of bitmasks, 0-indexed."""
        return self._masks

    def mask(self, row: int, col: int) -> int:
        return self._masks[row - 1][col - 1]

    def contains(self, row: int, col: int, symbol: int) -> bool:
        return bool(self._masks[row - 1][col - 1] >> (symbol - 1) & 1)

    def symbols_at(self, row: int, col: int) -> frozenset[int]:
        return symbols_of(self._masks[row - 1][col - 1])

    def cells(self) -> Iterator[tuple[Cell, frozenset[int]]]:
        for r in range(self.n):
            for c in range(self.n):
                m = self._masks[r][c]
                if m:
                    yield Cell(r + 1, c + 1), symbols_of(m)

    def entry_count(self) -> int:
        return sum(m.bit_count() for row in self._masks for m in row)

    def transposed(self) -> "AvoidanceArray":
        return AvoidanceArray(
            self.n,
            [[self._masks[c][r] for c in range(self.n)] for r in range(self.n)],
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, AvoidanceArray)
            and self.n == other.n
            and self._masks == other._masks
        )

    def __hash__(self):
        return hash((self.n, self._masks))

    def __repr__(self):
        nonempty = sum(1 for row in self._masks for m in row if m)
        return f"AvoidanceArray(n={self.n}, nonempty={nonempty})"


class Intercalate(NamedTuple):
    """Two rows and two columns whose four cells carry crossed symbols."""

    rows: tuple[int, int]
    cols: tuple[int, int]

    def canonical(self) -> "Intercalate":
        r1, r2 = sorted(self.rows)
        c1, c2 = sorted(self.cols)
        return Intercalate((r1, r2), (c1, c2))

    def cells(self) -> tuple[Cell, Cell, Cell, Cell]:
        (r1, r2), (c1, c2) = self.rows, self.cols
        return (Cell(r1, c1), Cell(r1, c2), Cell(r2, c1), Cell(r2, c2))


class TradeEntry(NamedTuple):
    cell: Cell
    old: int
    new: int


@dataclass(frozen=True)
class Trade:
    """A set of cells with old/new entries, mapping Latin square to Latin square."""

    entries: tuple[TradeEntry, ...]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.old == e.new:
                raise InvalidInput(f"trade entry at {e.cell} does not change the cell")
            if e.cell in seen:
                raise InvalidInput(f"cell {e.cell} repeated in trade")
            seen.add(e.cell)

    def __len__(self) -> int:
        return len(self.entries)

    def cells(self) -> frozenset[Cell]:
        return frozenset(e.cell for e in self.entries)

    def symbols(self) -> frozenset[int]:
        out = set()
        for e in self.entries:
            out.add(e.old)
            out.add(e.new)
        return frozenset(out)

    def old_symbols(self) -> frozenset[int]:
        return frozenset(e.old for e in self.entries)

    @classmethod
    def between(cls, before: LatinSquare, after: LatinSquare) -> "Trade":
        """The trade carrying one Latin square to another."""
        diff = np.nonzero(before.grid != after.grid)
        entries = tuple(
            TradeEntry(
                Cell(int(r) + 1, int(c) + 1),
                int(before.grid[r, c]),
                int(after.grid[r, c]),
            )
            for r, c in zip(*diff)
        )
        return cls(entries)


@dataclass(frozen=True)
class Params:
    """Solver parameters.

    ``alpha`` bounds the density of P, ``beta`` the array profile, and
    ``epsilon``, ``k``, ``d`` control the scramble slack, the disturbed-cell
    budget, and the overload threshold.  ``c_of_n``/``f_of_n`` are stored
    as a rational slope plus a floor value so that integer evaluation is
    exact.
    """

    alpha: float = 0.05
    beta: float = 0.05
    epsilon: float = 0.1
    k: float = 0.1
    d: float = 0.25
    c_slope: Fraction = Fraction(1, 20)
    c_min: int = 1
    f_slope: Fraction = Fraction(1, 10)
    f_min: int = 1
    exceptional_cell_budget: int | None = None  # None means 3n+7
    max_scramble_tries: int = 200
    rng_seed: int = 0
    fallback_policy: str = "best-effort"  # or "strict"
    oracle_threshold: int = 8
    max_restarts: int = 8

    def __post_init__(self):
        for name in ("alpha", "beta", "epsilon", "k", "d"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InvalidInput(f"{name}={v} outside [0, 1]")
        if self.fallback_policy not in ("strict", "best-effort"):
            raise InvalidInput(f"unknown fallback_policy {self.fallback_policy!r}")

    def c_of_n(self, n: int) -> int:
        return max(self.c_min, int(self.c_slope * n))

    def f_of_n(self, n: int) -> int:
        return max(self.f_min, int(self.f_slope * n))

    def exceptional_budget(self, n: int) -> int:
        if self.exceptional_cell_budget is not None:
            return self.exceptional_cell_budget
        return 3 * n + 7


# ---------------------------------------------------------------------------
# validation and predicates


@dataclass(frozen=True)
class PlsReport:
    """Every row/column duplicate found in a grid."""

    problems: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.problems


def validate_pls(P: PartialLatinSquare) -> PlsReport:
    """Report every duplicated symbol in a row or column of P."""
    problems = []
    g = P.grid
    for axis, kind in ((1, "row"), (0, "col")):
        lines = g if axis == 1 else g.T
        for i, line in enumerate(lines, start=1):
            vals = line[line != 0]
            if len(vals) != len(np.unique(vals)):
                syms, counts = np.unique(vals, return_counts=True)
                for s in syms[counts > 1]:
                    problems.append(f"{kind} {i}: symbol {int(s)} repeated")
    return PlsReport(tuple(problems))


def is_alpha_dense(P: PartialLatinSquare, alpha: float) -> bool:
    """True iff every row, column, and symbol of P is used at most alpha*n times."""
    g = P.grid
    n = P.n
    bound = alpha * n + 1e-9
    row_counts = np.count_nonzero(g, axis=1)
    col_counts = np.count_nonzero(g, axis=0)
    sym_counts = np.bincount(g[g != 0], minlength=n + 1)[1:]
    return bool(
        row_counts.max(initial=0) <= bound
        and col_counts.max(initial=0) <= bound
        and sym_counts.max(initial=0) <= bound
    )


def is_mmm_array(A: AvoidanceArray, m1: int, m2: int, m3: int) -> bool:
    """True iff A is an (m1, m2, m3)-array: cell sets of size <= m1 and
    every symbol occurring <= m2 times per row and <= m3 times per column."""
    n = A.n
    row_occ = np.zeros((n, n), dtype=np.int32)
    col_occ = np.zeros((n, n), dtype=np.int32)
    for r in range(n):
        for c in range(n):
            m = A.masks[r][c]
            if not m:
                continue
            if m.bit_count() > m1:
                return False
            s = 0
            while m:
                if m & 1:
                    row_occ[r, s] += 1
                    col_occ[c, s] += 1
                m >>= 1
                s += 1
    return bool(row_occ.max(initial=0) <= m2 and col_occ.max(initial=0) <= m3)


def conflict_cells(L: LatinSquare, A: AvoidanceArray) -> set[Cell]:
    """Cells where the square's entry is forbidden by the array."""
    if L.n != A.n:
        raise InvalidInput("order mismatch")
    out = set()
    g = L.grid
    for r in range(L.n):
        row_masks = A.masks[r]
        for c in range(L.n):
            if row_masks[c] >> (int(g[r, c]) - 1) & 1:
                out.add(Cell(r + 1, c + 1))
    return out


def prescribed_cells(P: PartialLatinSquare) -> set[Cell]:
    """The non-empty cells of P."""
    return {cell for cell, _ in P.cells()}


def is_intercalate(L: LatinSquare, C: Intercalate) -> bool:
    (r1, r2), (c1, c2) = C.rows, C.cols
    if r1 == r2 or c1 == c2:
        return False
    a, b = L.get(r1, c1), L.get(r1, c2)
    return a != b and L.get(r2, c2) == a and L.get(r2, c1) == b


def _require_intercalate(L: LatinSquare, C: Intercalate) -> None:
    if not is_intercalate(L, C):
        raise NotAnIntercalate(f"{C} is not an intercalate of the square")


def is_strong_intercalate(L: LatinSquare, C: Intercalate) -> bool:
    """True iff exactly one of the intercalate's two symbols lies in 1..n//2."""
    _require_intercalate(L, C)
    half = L.n // 2
    a = L.get(C.rows[0], C.cols[0])
    b = L.get(C.rows[0], C.cols[1])
    return (a <= half) != (b <= half)


def is_allowed_intercalate(L: LatinSquare, C: Intercalate, A: AvoidanceArray) -> bool:
    """True iff swapping on C leaves none of its four cells in conflict with A."""
    _require_intercalate(L, C)
    (r1, r2), (c1, c2) = C.rows, C.cols
    a, b = L.get(r1, c1), L.get(r1, c2)
    return not (
        A.contains(r1, c1, b)
        or A.contains(r1, c2, a)
        or A.contains(r2, c1, a)
        or A.contains(r2, c2, b)
    )


def swap_intercalate(L: LatinSquare, C: Intercalate) -> LatinSquare:
    """Exchange the intercalate's two symbols on its four cells."""
    _require_intercalate(L, C)
    (r1, r2), (c1, c2) = C.rows, C.cols
    grid = L.grid.copy()
    a, b = grid[r1 - 1, c1 - 1], grid[r1 - 1, c2 - 1]
    grid[r1 - 1, c1 - 1] = b
    grid[r2 - 1, c2 - 1] = b
    grid[r1 - 1, c2 - 1] = a
    grid[r2 - 1, c1 - 1] = a
    return LatinSquare(grid)


def apply_trade(L: LatinSquare, T: Trade) -> LatinSquare:
    """Replace every trade cell's old entry by its new one.

    Raises OldMismatch if the square disagrees with an entry's old symbol
    and NotLatinAfterTrade if the result is not Latin.
    """
    grid = L.grid.copy()
    touched_rows = set()
    touched_cols = set()
    for (r, c), old, new in T.entries:
        if grid[r - 1, c - 1] != old:
            raise OldMismatch(
                f"cell {(r, c)} holds {int(grid[r - 1, c - 1])}, trade expected {old}"
            )
        grid[r - 1, c - 1] = new
        touched_rows.add(r - 1)
        touched_cols.add(c - 1)
    n = L.n
    expect = np.arange(1, n + 1)
    for r in touched_rows:
        if not np.array_equal(np.sort(grid[r]), expect):
            raise NotLatinAfterTrade(f"row {r + 1} broken by trade")
    for c in touched_cols:
        if not np.array_equal(np.sort(grid[:, c]), expect):
            raise NotLatinAfterTrade(f"column {c + 1} broken by trade")
    return LatinSquare(grid)


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of checking a claimed solution against (P, A)."""

    latin_violations: tuple[str, ...] = ()
    completion_violations: tuple[Cell, ...] = ()
    conflict_violations: tuple[Cell, ...] = ()

    @property
    def clean(self) -> bool:
        return not (
            self.latin_violations
            or self.completion_violations
            or self.conflict_violations
        )


def verify_solution(
    L: PartialLatinSquare, P: PartialLatinSquare, A: AvoidanceArray
) -> VerifyReport:
    """Check that L is Latin, completes P, and avoids A."""
    if not (L.n == P.n == A.n):
        raise InvalidInput("order mismatch")
    latin = []
    if not L.is_complete():
        latin.append("square has empty cells")
    if not _rows_cols_are_permutations(L.grid):
        latin.append("rows/columns are not permutations of [n]")
    completion = tuple(
        cell for cell, s in P.cells() if L.get(cell.row, cell.col) != s
    )
    conflicts: tuple[Cell, ...] = ()
    if not latin:
        conflicts = tuple(sorted(conflict_cells(LatinSquare(L.grid), A)))
    else:
        found = []
        for r in range(L.n):
            for c in range(L.n):
                s = int(L.grid[r, c])
                if s and A.masks[r][c] >> (s - 1) & 1:
                    found.append(Cell(r + 1, c + 1))
        conflicts = tuple(found)
    return VerifyReport(tuple(latin), completion, conflicts)
