"""Stage 1: starting Latin squares rich in strong intercalates.

The even order n = 2r uses the four-block square M built from the cyclic
square of order r; every cell of it lies in exactly r strong intercalates.

Odd orders are produced by prolongating the even square of order n-1 along
a transversal and are certified by an explicit census rather than trusted.
M(n-1) has a formulaic transversal when (n-1)/2 is even; when (n-1)/2 is
odd it has none at all and a one-intercalate pre-swap unlocks one.
Prolongation costs most interior cells one or two strong intercalates, so
the certificate carries an explicit ``slack``: ``slack=0`` demands the
full floor(n/2) count outside a 3n+7 budget, which this construction
family cannot reach for n >= 5 (the acceptance suite documents this);
callers that only need the epsilon-sized scramble-stage guarantee pass
``slack=None`` to take the smallest slack whose exceptional set fits the
budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Cell, LatinSquare
from .errors import ConstructionFailed, EvenOrder, InvalidInput, OddOrder


@dataclass(frozen=True)
class StartingSquare:
    """A starting square plus the cells exempt from the intercalate guarantee."""

    square: LatinSquare
    exceptional_cells: frozenset[Cell]
    r: int
    census_slack: int = 0

    @property
    def n(self) -> int:
        return self.square.n


def build_even(n: int) -> StartingSquare:
    """The block square M: cyclic top-left, shifted top-right, transposes below.

    Every cell lies in exactly n/2 strong intercalates, so the exceptional
    set is empty.
    """
    if n < 2 or n % 2:
        raise OddOrder(f"build_even needs an even order >= 2, got {n}")
    r = n // 2
    i = np.arange(r)
    m11 = (i[None, :] - i[:, None]) % r + 1
    m12 = m11 + r
    grid = np.block([[m11, m12], [m12.T, m11.T]])
    return StartingSquare(LatinSquare(grid), frozenset(), r)


def strong_intercalate_census(L: LatinSquare) -> np.ndarray:
    """count[i][j] = number of strong intercalates of L containing cell (i,j).

    Full enumeration via symbol-position maps: for each ordered row pair
    (r1, r2) and column c1 the closing column is an O(1) lookup, giving
    O(n^3) overall; vectorized over (r2, c1) per r1.
    """
    g = L.grid.astype(np.int32)
    n = L.n
    half = n // 2
    col_of = np.empty((n, n + 1), dtype=np.int32)
    rows_idx = np.arange(n)
    col_of[rows_idx[:, None], g] = rows_idx[None, :]
    small = g <= half
    counts = np.zeros((n, n), dtype=np.int32)
    for r1 in range(n):
        s_row = g[r1]
        # closing column of the intercalate through (r1,c1) with other row r2
        c2 = col_of[r1][g]
        closes = col_of[:, s_row] == c2
        closes[r1, :] = False
        strong = small[r1][None, :] != small
        counts[r1] = np.count_nonzero(closes & strong, axis=0)
    return counts


def _prolongate(grid: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Extend an order-m square by one along the transversal {(x, sigma(x))}.

    The transversal cells receive the new symbol m+1; their displaced
    symbols move to the new last column and row.
    """
    m = grid.shape[0]
    displaced = grid[np.arange(m), sigma]
    if len(np.unique(displaced)) != m:
        raise InvalidInput("diagonal is not a transversal")
    out = np.zeros((m + 1, m + 1), dtype=np.int32)
    out[:m, :m] = grid
    out[np.arange(m), sigma] = m + 1
    out[:m, m] = displaced
    out[m, sigma] = displaced
    out[m, m] = m + 1
    return out


def is_transversal(grid: np.ndarray, sigma: np.ndarray) -> bool:
    m = grid.shape[0]
    if sorted(sigma.tolist()) != list(range(m)):
        return False
    return len(set(grid[np.arange(m), sigma].tolist())) == m


def _formula_transversal(r: int, q1: int = 0, q3: int | None = None) -> np.ndarray | None:
    """Reflection transversal of M(2r) for even r.

    Rows split in half per block side; within each quadrant the column is
    a reflection of the row, which makes the diagonal symbols arithmetic
    progressions of step 2 covering complementary parity classes.
    """
    if r % 2:
        return None
    h = r // 2
    if q3 is None:
        q3 = (q1 + 1) if h % 2 == 0 else q1
    if h % 2 == 0 and (q1 - q3) % 2 == 0:
        return None
    if h % 2 == 1 and (q1 - q3) % 2 == 1:
        return None
    q4 = (q1 - h) % r
    q2 = (q3 + h) % r
    sig = np.empty(2 * r, dtype=np.int64)
    x = np.arange(2 * r)
    sig[0:h] = (q1 - x[0:h]) % r
    sig[h:r] = r + (q3 - x[h:r]) % r
    sig[r : r + h] = (q4 - (x[r : r + h] - r)) % r
    sig[r + h : 2 * r] = r + (q2 - (x[r + h : 2 * r] - r)) % r
    return sig


def find_transversal(
    grid: np.ndarray,
    rng: np.random.Generator,
    restarts: int = 6,
    node_budget: int = 100_000,
    force: tuple[int, int] | None = None,
) -> np.ndarray | None:
    """Backtracking transversal search with randomized restarts.

    ``force`` pins one (row, column) cell into the transversal, which is
    how searches are steered through a pre-swapped cell.
    """
    m = grid.shape[0]
    for _ in range(restarts):
        if force is None:
            order = list(rng.permutation(m))
        else:
            rest = [x for x in range(m) if x != force[0]]
            rng.shuffle(rest)
            order = [force[0]] + rest
        sigma = np.full(m, -1, dtype=np.int64)
        cols_used = np.zeros(m, dtype=bool)
        syms_used = np.zeros(m + 2, dtype=bool)
        stack: list[int] = []
        depth = 0
        nodes = 0
        cand_iters: list[list[int]] = []
        while True:
            if depth == m:
                return sigma
            if len(cand_iters) == depth:
                x = order[depth]
                if depth == 0 and force is not None:
                    cand = [force[1]]
                else:
                    free = np.nonzero(~cols_used & ~syms_used[grid[x]])[0]
                    cand = free.tolist()
                    rng.shuffle(cand)
                cand_iters.append(cand)
            x = order[depth]
            cand = cand_iters[depth]
            nodes += 1
            if nodes > node_budget:
                break
            if cand:
                c = cand.pop()
                sigma[x] = c
                cols_used[c] = True
                syms_used[grid[x, c]] = True
                stack.append(c)
                depth += 1
            else:
                cand_iters.pop()
                if not stack:
                    break
                depth -= 1
                c = stack.pop()
                x = order[depth]
                cols_used[c] = False
                syms_used[grid[x, c]] = False
                sigma[x] = -1
    return None


def _strong_intercalates_of(grid: np.ndarray, limit: int = 2000) -> list:
    """Some strong intercalates (r1, r2, c1, c2) of the square."""
    m = grid.shape[0]
    half = m // 2
    out = []
    col_of = np.empty((m, m + 1), dtype=np.int64)
    idx = np.arange(m)
    col_of[idx[:, None], grid] = idx[None, :]
    for r1 in range(m):
        for r2 in range(r1 + 1, m):
            for c1 in range(m):
                c2 = int(col_of[r1, grid[r2, c1]])
                if c2 <= c1 or grid[r2, c2] != grid[r1, c1]:
                    continue
                a, b = int(grid[r1, c1]), int(grid[r1, c2])
                if (a <= half) != (b <= half):
                    out.append((r1, r2, c1, c2))
                    if len(out) >= limit:
                        return out
    return out


def _swap_cells(grid: np.ndarray, ic) -> np.ndarray:
    r1, r2, c1, c2 = ic
    g = grid.copy()
    g[r1, c1], g[r1, c2] = g[r1, c2], g[r1, c1]
    g[r2, c1], g[r2, c2] = g[r2, c2], g[r2, c1]
    return g


def _prolongation_candidates(base: np.ndarray, rng: np.random.Generator, limit: int):
    """Prolonged squares to certify.

    For even r: formulaic reflection transversals with varied offsets.
    For odd r the base has no transversal; swap one strong intercalate
    and force the search through a swapped cell.
    """
    m = base.shape[0]
    r = m // 2
    produced = 0
    if r % 2 == 0:
        step = 2
        for q1 in range(0, min(r, 2 * limit), 1):
            q3 = (q1 + 1) if (r // 2) % 2 == 0 else (q1 + step) % r
            sig = _formula_transversal(r, q1=q1, q3=q3 % r)
            if sig is not None and is_transversal(base, sig):
                produced += 1
                yield _prolongate(base, sig)
                if produced >= limit:
                    return
        # top up with searched transversals at searchable orders
        if m <= 64:
            while produced < limit:
                sig = find_transversal(base, rng, restarts=3)
                if sig is None:
                    return
                produced += 1
                yield _prolongate(base, sig)
        return
    swaps = _strong_intercalates_of(base)
    order = rng.permutation(len(swaps))
    for k in order:
        if produced >= limit:
            return
        ic = swaps[int(k)]
        g = _swap_cells(base, ic)
        sig = find_transversal(g, rng, restarts=3, force=(ic[0], ic[2]))
        if sig is not None:
            produced += 1
            yield _prolongate(g, sig)


def build_odd(
    n: int,
    *,
    slack: int | None = 0,
    budget: int | None = None,
    candidates: int = 6,
    rng_seed: int = 0x0DD,
) -> StartingSquare:
    """An order-n starting square, n odd, certified by census.

    All cells except at most 3n+7 (recorded in ``exceptional_cells``,
    always including the full last row and column) must lie in at least
    floor(n/2) - slack strong intercalates. ``slack=None`` picks the
    smallest slack whose exceptional set fits the budget. Raises
    ConstructionFailed when no candidate meets the certificate.
    """
    if n < 3 or n % 2 == 0:
        raise EvenOrder(f"build_odd needs an odd order >= 3, got {n}")
    if budget is None:
        budget = 3 * n + 7

    if n * n <= budget:
        # every cell may be exceptional; any Latin square qualifies
        square = LatinSquare.cyclic(n)
        cells = frozenset(
            Cell(i, j) for i in range(1, n + 1) for j in range(1, n + 1)
        )
        return StartingSquare(square, cells, n // 2, 0)

    base = build_even(n - 1).square.grid.astype(np.int32)
    rng = np.random.default_rng(rng_seed ^ n)

    best_fit: tuple[int, int, LatinSquare, np.ndarray] | None = None
    best_any: tuple[int, int] | None = None
    tried = 0
    for grid in _prolongation_candidates(base, rng, candidates):
        tried += 1
        square = LatinSquare(grid)
        counts = strong_intercalate_census(square)
        slacks = [slack] if slack is not None else range(0, n // 2 + 1)
        for s in slacks:
            below = counts < (n // 2 - s)
            size = _exceptional_size(below, n)
            if best_any is None or (size, s) < best_any:
                best_any = (size, s)
            if size <= budget:
                best_fit = (s, size, square, below)
                break
        if best_fit is not None:
            break

    if best_fit is None and slack is None and tried == 0:
        # no transversal reachable (order 6 base); any square qualifies
        # under the vacuous threshold, with only the last row and column
        # marked exceptional
        square = LatinSquare.cyclic(n)
        exceptional = {Cell(n, j) for j in range(1, n + 1)}
        exceptional |= {Cell(i, n) for i in range(1, n + 1)}
        return StartingSquare(square, frozenset(exceptional), n // 2, n // 2)

    if best_fit is None:
        detail = (
            f"best candidate had an exceptional set of {best_any[0]} cells "
            f"at slack {best_any[1]}"
            if best_any
            else "no prolongation candidate was available"
        )
        raise ConstructionFailed(
            f"odd construction missed the census certificate at n={n}: "
            f"{detail} against budget {budget} ({tried} candidates tried)"
        )
    used_slack, size, square, below = best_fit
    exceptional = {
        Cell(int(i) + 1, int(j) + 1) for i, j in zip(*np.nonzero(below))
    }
    exceptional.update(Cell(n, j) for j in range(1, n + 1))
    exceptional.update(Cell(i, n) for i in range(1, n + 1))
    return StartingSquare(square, frozenset(exceptional), n // 2, used_slack)


def _exceptional_size(below: np.ndarray, n: int) -> int:
    interior = int(below[: n - 1, : n - 1].sum())
    return interior + 2 * n - 1
