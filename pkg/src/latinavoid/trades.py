"""Stage 4: the trade engine.

Exchanges the contents of two cells in a row (or column) through chains
of allowed strong intercalates of the starting square, and fixes
prescribed cells by composing four such exchanges with three closing
swaps. Every constraint from the source lemmas is implemented as an
explicit predicate on candidates; under the best-effort policy predicate
groups are dropped in a fixed order (overload first, then the
disturbance/strongness locality that ties candidates to the starting
square) while the core postconditions (Latin validity, exchange effect,
size bounds, no new conflicts, prescribed-cell rules, avoided symbols)
are always verified before a trade is returned.

Candidate enumeration order is seeded-random over the valid set; all
randomness flows through the state's generator, so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import (
    AvoidanceArray,
    Cell,
    LatinSquare,
    Params,
    PartialLatinSquare,
    Trade,
    TradeEntry,
    apply_trade,
)
from .errors import (
    FeasibilityUnmet,
    InvalidInput,
    NoValidColumns,
    NoValidDonorCell,
)
from .starting import StartingSquare

# relaxation levels: predicates dropped at or below each level
LEVEL_FULL = 0  # everything the lemmas ask for
LEVEL_NO_OVERLOAD = 1  # drop d-overload predicates
LEVEL_NO_LOCALITY = 2  # drop disturbance/strongness; close in the current square

RELAXATION_NAMES = {LEVEL_NO_OVERLOAD: "overload", LEVEL_NO_LOCALITY: "disturbance"}


@dataclass(frozen=True)
class ExchangeRequest:
    """Symbols whose cells a trade must not touch."""

    avoid_symbols: frozenset[int] = frozenset()

    @classmethod
    def of(cls, avoid) -> "ExchangeRequest":
        if isinstance(avoid, ExchangeRequest):
            return avoid
        return cls(frozenset(int(s) for s in avoid))


def exchange_feasibility_lhs(params: Params, n: int, a: int) -> float:
    """Left side of the row/column exchange lemma's hypothesis (needs > 6)."""
    c = params.c_of_n(n)
    return (
        n // 2
        - 2 * params.epsilon * n
        - 6 * params.d * n
        - 5 * (params.k / params.d) * n
        - 4 * params.alpha * n
        - 8 * c
        - 3 * a
        - 3 * params.beta * n
    )


def fix_cell_feasibility_lhs(params: Params, n: int) -> float:
    """Left side of the fix-cell lemma's hypothesis (needs > 1)."""
    c = params.c_of_n(n)
    f = params.f_of_n(n)
    return n - 2 * (
        4 * ((params.k + 64 / n**2) / params.d) * n
        + 3
        + 6 * c
        + 2 * params.beta * n
        + 4 * (params.k / params.d) * n
        + 2 * params.alpha * n
        + 2 * f
        + 4 * params.d * n
    )


class SolverState:
    """Mutable trade-engine bookkeeping: current square, disturbed cells,
    overload tallies, prescription tracking, and the trade log.

    Single-owner mutable; all internals are 0-based with 1-based symbols.
    """

    def __init__(
        self,
        L0: StartingSquare,
        Phat: PartialLatinSquare,
        A: AvoidanceArray,
        params: Params,
        rng: np.random.Generator | None = None,
    ):
        n = L0.n
        if not (Phat.n == n and A.n == n):
            raise InvalidInput("order mismatch")
        self.n = n
        self.params = params
        self.rng = rng if rng is not None else np.random.default_rng(params.rng_seed)
        self.L0 = L0
        self.grid = L0.square.grid.astype(np.int32).copy()
        self.grid0 = L0.square.grid.astype(np.int32)
        self.phat = Phat.grid.astype(np.int32)
        self.amasks = [list(row) for row in A.masks]
        self.A = A
        self.prescribed = self.phat != 0
        self.row_pos = _position_map(self.grid)
        self.col_pos = _position_map(self.grid.T)
        self.row_pos0 = _position_map(self.grid0)
        self.col_pos0 = _position_map(self.grid0.T)
        self.disturbed = np.zeros((n, n), dtype=bool)
        for cell in L0.exceptional_cells:
            self.disturbed[cell.row - 1, cell.col - 1] = True
        self.row_tally = np.zeros(n, dtype=np.int64)
        self.col_tally = np.zeros(n, dtype=np.int64)
        self.sym_tally = np.zeros(n + 1, dtype=np.int64)
        self.presc_sym = np.bincount(
            self.phat[self.prescribed].astype(np.int64), minlength=n + 1
        )
        self.q = 0
        self.trade_log: list[Trade] = []
        self.relaxations: dict[str, int] = {}
        self.dn = params.d * n

    # -- queries ---------------------------------------------------------

    @property
    def square(self) -> LatinSquare:
        return LatinSquare(self.grid.copy())

    def disagreeing_cells(self) -> list[Cell]:
        """Prescribed cells where the square disagrees with P-hat."""
        mask = self.prescribed & (self.grid != self.phat)
        return [Cell(int(r) + 1, int(c) + 1) for r, c in zip(*np.nonzero(mask))]

    def fixed_cells(self) -> set[Cell]:
        mask = self.prescribed & (self.grid == self.phat)
        return {Cell(int(r) + 1, int(c) + 1) for r, c in zip(*np.nonzero(mask))}

    def conflict_count(self) -> int:
        count = 0
        for r in range(self.n):
            for c in range(self.n):
                if self.amasks[r][c] >> (int(self.grid[r, c]) - 1) & 1:
                    count += 1
        return count

    def note_relaxation(self, name: str) -> None:
        self.relaxations[name] = self.relaxations.get(name, 0) + 1

    # -- mutation ---------------------------------------------------------

    def record_trade(self, T: Trade) -> "SolverState":
        """Apply a trade: replace the square, mark cells disturbed, bump
        tallies once per (cell, line/symbol) incidence for both the old
        and the new symbol, and advance q."""
        new_square = apply_trade(LatinSquare(self.grid.copy()), T)
        self.grid = new_square.grid.astype(np.int32).copy()
        for (r, c), old, new in T.entries:
            r0, c0 = r - 1, c - 1
            self.disturbed[r0, c0] = True
            self.row_tally[r0] += 1
            self.col_tally[c0] += 1
            self.sym_tally[old] += 1
            self.sym_tally[new] += 1
            self.row_pos[r0, new] = c0
            self.col_pos[c0, new] = r0
        self.q += 1
        self.trade_log.append(T)
        return self


def _position_map(grid: np.ndarray) -> np.ndarray:
    n = grid.shape[0]
    pos = np.zeros((n, n + 1), dtype=np.int32)
    idx = np.arange(n)
    pos[idx[:, None], grid] = idx[None, :]
    return pos


def is_d_overloaded(state: SolverState, target) -> bool:
    """target is ("row", i), ("col", j), or ("symbol", s), 1-based."""
    kind, key = target
    if kind == "row":
        return float(state.row_tally[key - 1]) > state.dn
    if kind == "col":
        return float(state.col_tally[key - 1]) > state.dn
    if kind == "symbol":
        return float(state.sym_tally[key]) > state.dn
    raise InvalidInput(f"unknown overload target {kind!r}")


# ---------------------------------------------------------------------------
# a transposable view over the state plus per-call working bookkeeping


class _Ctx:
    """Read view of a state, possibly transposed, plus a mutable working
    grid that in-progress fix-cell trades stack their exchanges onto."""

    __slots__ = (
        "st",
        "T",
        "grid",
        "grid0",
        "row_pos",
        "col_pos",
        "row_pos0",
        "col_pos0",
        "disturbed",
        "prescribed",
        "pinned",
        "half",
        "n",
        "sym_over_v",
    )

    def __init__(self, state: SolverState, transposed: bool, pinned: set | None):
        self.st = state
        self.T = transposed
        self.n = state.n
        self.half = state.n // 2
        if not transposed:
            self.grid = state.grid.copy()
            self.grid0 = state.grid0
            self.row_pos = state.row_pos.copy()
            self.col_pos = state.col_pos.copy()
            self.row_pos0 = state.row_pos0
            self.col_pos0 = state.col_pos0
            self.disturbed = state.disturbed.copy()
            self.prescribed = state.prescribed
        else:
            self.grid = state.grid.T.copy()
            self.grid0 = state.grid0.T
            self.row_pos = state.col_pos.copy()
            self.col_pos = state.row_pos.copy()
            self.row_pos0 = state.col_pos0
            self.col_pos0 = state.row_pos0
            self.disturbed = state.disturbed.T.copy()
            self.prescribed = state.prescribed.T
        self.pinned = pinned if pinned is not None else set()
        self.sym_over_v = state.sym_tally > state.dn

    def forbids(self, r: int, c: int, s: int) -> bool:
        if self.T:
            r, c = c, r
        return bool(self.st.amasks[r][c] >> (s - 1) & 1)

    def row_over(self, r: int) -> bool:
        t = self.st.col_tally if self.T else self.st.row_tally
        return float(t[r]) > self.st.dn

    def col_over(self, c: int) -> bool:
        t = self.st.row_tally if self.T else self.st.col_tally
        return float(t[c]) > self.st.dn

    def sym_over(self, s: int) -> bool:
        return float(self.st.sym_tally[s]) > self.st.dn

    def apply_swap(self, cells4) -> None:
        """Swap the two symbols on a verified intercalate of the work grid."""
        (r1, c1), (r1b, c2), (r2, c1b), (r2b, c2b) = cells4
        a = int(self.grid[r1, c1])
        b = int(self.grid[r1, c2])
        assert (
            self.grid[r2, c2b] == a and self.grid[r2, c1b] == b and a != b
        ), "swap target is not an intercalate (search bug)"
        g = self.grid
        g[r1, c1], g[r1, c2] = b, a
        g[r2, c1], g[r2, c2] = a, b
        for (r, c) in cells4:
            s = int(g[r, c])
            self.row_pos[r, s] = c
            self.col_pos[c, s] = r
            self.disturbed[r, c] = True

    def trade_vs_state(self) -> Trade:
        """Net difference between the working grid and the real state."""
        base = self.st.grid.T if self.T else self.st.grid
        diff = np.nonzero(base != self.grid)
        entries = []
        for r, c in zip(*diff):
            rr, cc = (int(c), int(r)) if self.T else (int(r), int(c))
            old = int(base[r, c])
            new = int(self.grid[r, c])
            entries.append(TradeEntry(Cell(rr + 1, cc + 1), old, new))
        return Trade(tuple(entries))


def _levels_for(policy: str) -> list[int]:
    if policy == "strict":
        return [LEVEL_FULL]
    return [LEVEL_FULL, LEVEL_NO_OVERLOAD, LEVEL_NO_LOCALITY]


# ---------------------------------------------------------------------------
# the exchange search


def _exchange_search(
    ctx: _Ctx,
    r1: int,
    c1_fixed: int | None,
    c2_fixed: int | None,
    avoid: frozenset[int],
    level: int,
    rng: np.random.Generator,
    max_c1: int = 24,
    max_c2: int = 24,
    ends_exempt: bool = False,
):
    """Find the swap sequence exchanging (r1,c1) and (r1,c2); cells are
    0-based here. Returns (c1, c2, [swap cell-quadruples]) or None.

    ``ends_exempt`` lifts the not-prescribed/not-overloaded requirements
    from the two exchanged cells themselves (used by the fix-cell fast
    path, whose own postconditions govern those cells).
    """
    n = ctx.n
    grid = ctx.grid

    def c1_ok(c1: int) -> bool:
        s1 = int(grid[r1, c1])
        if s1 in avoid or (r1, c1) in ctx.pinned:
            return False
        if not ends_exempt and ctx.prescribed[r1, c1]:
            return False
        if level < LEVEL_NO_OVERLOAD:
            if ctx.col_over(c1):
                return False
            if not ends_exempt and ctx.sym_over(s1):
                return False
        return True

    def c2_ok(c1: int, c2: int):
        if c2 == c1:
            return None
        s1 = int(grid[r1, c1])
        s2 = int(grid[r1, c2])
        if s2 in avoid or (r1, c2) in ctx.pinned:
            return None
        if not ends_exempt and ctx.prescribed[r1, c2]:
            return None
        if ctx.forbids(r1, c1, s2) or ctx.forbids(r1, c2, s1):
            return None
        if level < LEVEL_NO_OVERLOAD:
            if ctx.col_over(c2):
                return None
            if not ends_exempt and ctx.sym_over(s2):
                return None
        r3 = int(ctx.col_pos[c1, s2])
        r4 = int(ctx.col_pos[c2, s1])
        for (rr, cc) in ((r3, c1), (r4, c2)):
            if ctx.prescribed[rr, cc] or (rr, cc) in ctx.pinned:
                return None
            if level < LEVEL_NO_LOCALITY and ctx.disturbed[rr, cc]:
                return None
        if level < LEVEL_NO_OVERLOAD and (ctx.row_over(r3) or ctx.row_over(r4)):
            return None
        return r3, r4

    if c1_fixed is not None:
        c1_list = [c1_fixed] if c1_ok(c1_fixed) else []
    else:
        c1_list = [int(c) for c in rng.permutation(n) if c1_ok(int(c))][:max_c1]

    for c1 in c1_list:
        c2_iter = [c2_fixed] if c2_fixed is not None else (
            int(c) for c in rng.permutation(n)
        )
        attempts = 0
        for c2 in c2_iter:
            got = c2_ok(c1, c2)
            if got is None:
                continue
            attempts += 1
            if attempts > max_c2:
                break
            r3, r4 = got
            ops = _close_exchange(ctx, r1, c1, c2, r3, r4, avoid, level, rng)
            if ops is not None:
                return c1, c2, ops
    return None


def _close_exchange(ctx, r1, c1, c2, r3, r4, avoid, level, rng):
    """Build the swap sequence for fixed (c1, c2).

    Candidate partner rows are pre-filtered with vectorized closure and
    strongness masks; only the survivors get the per-cell predicate tail.
    """
    grid = ctx.grid
    s1 = int(grid[r1, c1])
    s2 = int(grid[r1, c2])

    if r3 == r4:
        # all four considered cells already form an intercalate
        r2 = r3
        if ctx.forbids(r2, c1, s1) or ctx.forbids(r2, c2, s2):
            return None
        return [((r1, c1), (r1, c2), (r2, c1), (r2, c2))]

    # source square for closures: the starting square at locality levels,
    # the current square once locality is dropped
    local = level < LEVEL_NO_LOCALITY
    G = ctx.grid0 if local else ctx.grid
    rpos = ctx.row_pos0 if local else ctx.row_pos
    cpos = ctx.col_pos0 if local else ctx.col_pos
    half = ctx.half
    n = ctx.n
    rows = np.arange(n)

    s3v = G[:, c1]
    s4v = G[:, c2]
    c4v = rpos[:, s2]
    c3v = rpos[:, s1]
    close2 = G[r4, c3v] == s4v
    close1 = (G[r3, c4v] == s3v) & close2
    usable = np.ones(n, dtype=bool)
    usable[[r1, r3, r4]] = False
    if local:
        small1 = s1 <= half
        small2 = s2 <= half
        strong1 = ((s3v <= half) != small2) & ((s4v <= half) != small1)
        strong2 = (s4v <= half) != small1
        close1 &= strong1
        close2 &= strong2
    if level < LEVEL_NO_OVERLOAD:
        ok_sym = ~ctx.sym_over_v
        usable &= ok_sym[s3v] & ok_sym[s4v]
    if avoid:
        for t in avoid:
            usable &= (s3v != t) & (s4v != t)

    cand1 = np.nonzero(close1 & usable)[0]
    if len(cand1):
        rng.shuffle(cand1)
        for r2 in cand1:
            ops = _case1_tail(
                ctx, G, rpos, int(r2), r1, c1, c2, r3, r4, s1, s2, level
            )
            if ops is not None:
                return ops
    cand2 = np.nonzero(close2 & usable)[0]
    if len(cand2):
        rng.shuffle(cand2)
        for r2 in cand2[:16]:
            ops = _case2_tail(
                ctx, G, rpos, cpos, int(r2), r1, c1, c2, r3, r4, s1, s2,
                avoid, level, half, rng,
            )
            if ops is not None:
                return ops
    return None


def _cell_clear(ctx, cells, level) -> bool:
    """Candidate cells must be unprescribed, unpinned, and (at locality
    levels) undisturbed so that they agree with the starting square."""
    pres = ctx.prescribed
    pinned = ctx.pinned
    dist = ctx.disturbed
    local = level < LEVEL_NO_LOCALITY
    for rc in cells:
        if pres[rc] or rc in pinned:
            return False
        if local and dist[rc]:
            return False
    return True


def _case1_tail(ctx, G, rpos, r2, r1, c1, c2, r3, r4, s1, s2, level):
    """Per-candidate checks for the two-intercalate closing."""
    s3 = int(G[r2, c1])
    s4 = int(G[r2, c2])
    c4 = int(rpos[r2, s2])
    c3 = int(rpos[r2, s1])
    cells = ((r2, c1), (r2, c2), (r2, c3), (r2, c4), (r3, c4), (r4, c3))
    if not _cell_clear(ctx, cells, level):
        return None
    all_cells = {
        (r1, c1), (r1, c2), (r3, c1), (r4, c2),
        (r2, c1), (r2, c2), (r2, c3), (r2, c4), (r3, c4), (r4, c3),
    }
    if len(all_cells) != 10:
        return None
    F = ctx.forbids
    if F(r3, c1, s3) or F(r2, c1, s2) or F(r2, c4, s3) or F(r3, c4, s2):
        return None
    if F(r4, c2, s4) or F(r2, c2, s1) or F(r2, c3, s4) or F(r4, c3, s1):
        return None
    if F(r2, c1, s1) or F(r2, c2, s2):
        return None
    return [
        ((r3, c1), (r3, c4), (r2, c1), (r2, c4)),
        ((r4, c2), (r4, c3), (r2, c2), (r2, c3)),
        ((r1, c1), (r1, c2), (r2, c1), (r2, c2)),
    ]


def _case2_tail(
    ctx, G, rpos, cpos, r2, r1, c1, c2, r3, r4, s1, s2, avoid, level, half, rng
):
    """Per-candidate checks for the matched-pair closing; the companion
    row r6 is pre-filtered with vectorized closure masks as well."""
    s3 = int(G[r2, c1])
    s4 = int(G[r2, c2])
    c3 = int(rpos[r2, s1])
    c4 = int(rpos[r2, s2])
    s5 = int(G[r3, c4])
    if s5 in avoid:
        return None
    if level < LEVEL_NO_OVERLOAD and ctx.sym_over(s5):
        return None
    base_cells = ((r2, c1), (r2, c2), (r2, c3), (r2, c4), (r4, c3), (r3, c4))
    if not _cell_clear(ctx, base_cells, level):
        return None
    F = ctx.forbids
    # the C3 swap plus the final entries at (r2,*), (r3,*)
    if F(r4, c2, s4) or F(r2, c2, s1) or F(r2, c3, s4) or F(r4, c3, s1):
        return None
    if F(r2, c1, s1) or F(r2, c2, s2) or F(r3, c4, s2):
        return None

    n = ctx.n
    rows = np.arange(n)
    s6v = G[:, c1]
    c6v = rpos[r2][s6v]
    ok = G[rows, c6v] == s3
    r5v = cpos[c4][s6v]
    c5v = rpos[r3][s6v]
    ok &= G[r5v, c5v] == s5
    for t in (s1, s2, s3, s4, s5):
        ok &= s6v != t
    if avoid:
        for t in avoid:
            ok &= s6v != t
    if level < LEVEL_NO_LOCALITY:
        small3 = s3 <= half
        small5 = s5 <= half
        ok &= ((s6v <= half) != small3) & ((s6v <= half) != small5)
    if level < LEVEL_NO_OVERLOAD:
        ok &= ~ctx.sym_over_v[s6v]
    ok[[r1, r2, r3, r4]] = False
    cand6 = np.nonzero(ok)[0]
    if not len(cand6):
        return None
    rng.shuffle(cand6)
    for r6 in cand6:
        r6 = int(r6)
        s6 = int(s6v[r6])
        c6 = int(c6v[r6])
        r5 = int(r5v[r6])
        c5 = int(c5v[r6])
        extra = ((r6, c1), (r6, c6), (r2, c6), (r5, c4), (r5, c5), (r3, c5))
        if not _cell_clear(ctx, extra, level):
            continue
        all_cells = set(base_cells) | set(extra) | {
            (r1, c1), (r1, c2), (r3, c1), (r4, c2),
        }
        if len(all_cells) != 16:
            continue
        if F(r2, c1, s6) or F(r6, c1, s3) or F(r6, c6, s6) or F(r2, c6, s3):
            continue
        if F(r3, c4, s6) or F(r5, c4, s5) or F(r5, c5, s6) or F(r3, c5, s5):
            continue
        if F(r3, c1, s6) or F(r2, c4, s6):
            continue
        return [
            ((r4, c2), (r4, c3), (r2, c2), (r2, c3)),
            ((r2, c1), (r2, c6), (r6, c1), (r6, c6)),
            ((r3, c4), (r3, c5), (r5, c4), (r5, c5)),
            ((r2, c1), (r2, c4), (r3, c1), (r3, c4)),
            ((r1, c1), (r1, c2), (r2, c1), (r2, c2)),
        ]
    return None


# ---------------------------------------------------------------------------
# public operations


def row_exchange(
    state: SolverState,
    r1: int,
    columns: tuple[int | None, int | None] = (None, None),
    avoid=ExchangeRequest(),
) -> Trade:
    """A trade of at most 16 cells exchanging the contents of (r1,c1) and
    (r1,c2), creating no new conflicts and touching no prescribed cells.

    ``columns`` pins one or both columns (1-based); unspecified columns
    are chosen in seeded-random order among valid candidates.
    """
    return _exchange_public(state, r1, columns, avoid, transposed=False)


def column_exchange(
    state: SolverState,
    c1: int,
    rows: tuple[int | None, int | None] = (None, None),
    avoid=ExchangeRequest(),
) -> Trade:
    """Transpose-symmetric counterpart of row_exchange for a column."""
    return _exchange_public(state, c1, rows, avoid, transposed=True)


def _exchange_public(state, line1, picks, avoid, transposed) -> Trade:
    req = ExchangeRequest.of(avoid)
    n = state.n
    if not 1 <= line1 <= n:
        raise InvalidInput("line index out of range")
    a = len(req.avoid_symbols)
    feasible = exchange_feasibility_lhs(state.params, n, a) > 6
    if not feasible:
        if state.params.fallback_policy == "strict":
            raise FeasibilityUnmet(
                f"exchange feasibility inequality fails at n={n}, a={a}"
            )
        state.note_relaxation("feasibility")
    p1 = picks[0] - 1 if picks[0] is not None else None
    p2 = picks[1] - 1 if picks[1] is not None else None
    for level in _levels_for(state.params.fallback_policy):
        ctx = _Ctx(state, transposed, None)
        found = _exchange_search(
            ctx, line1 - 1, p1, p2, req.avoid_symbols, level, state.rng
        )
        if found is None:
            continue
        if level > LEVEL_FULL:
            state.note_relaxation(RELAXATION_NAMES[level])
        c1, c2, ops = found
        for cells4 in ops:
            ctx.apply_swap(cells4)
        trade = ctx.trade_vs_state()
        report = verify_exchange_trade(
            state,
            trade,
            line1,
            req.avoid_symbols,
            transposed=transposed,
            positions=(c1 + 1, c2 + 1),
        )
        if report:
            raise AssertionError(
                f"exchange postconditions violated (search bug): {report}"
            )
        return trade
    raise NoValidColumns(
        f"no valid exchange found for {'column' if transposed else 'row'} {line1}"
    )


def verify_exchange_trade(
    state: SolverState,
    trade: Trade,
    line1: int,
    avoid_symbols: Iterable[int] = (),
    *,
    transposed: bool = False,
    positions: tuple[int, int] | None = None,
) -> list[str]:
    """Check the exchange lemma's verifiable postconditions; returns a list
    of violations (empty when clean). Used by the engine after every
    search and directly by the acceptance suite.

    ``positions`` names the two exchanged cells along the line (columns
    for a row exchange, rows for a column one); without it some pair of
    changed line cells must witness the exchange. Other line cells may
    legitimately change when a closing intercalate reuses the line.
    """
    problems = []
    avoid = frozenset(avoid_symbols)
    if len(trade) > 16:
        problems.append(f"trade uses {len(trade)} cells > 16")
    try:
        apply_trade(state.square, trade)
    except Exception as exc:  # noqa: BLE001 - report, don't crash the verifier
        return [f"trade does not apply cleanly: {exc}"]
    by_cell = {e.cell: e for e in trade.entries}
    line_entries = [
        e
        for e in trade.entries
        if (e.cell.col if transposed else e.cell.row) == line1
    ]
    if positions is not None:
        p1, p2 = positions
        cell1 = Cell(p1, line1) if transposed else Cell(line1, p1)
        cell2 = Cell(p2, line1) if transposed else Cell(line1, p2)
        e1, e2 = by_cell.get(cell1), by_cell.get(cell2)
        if e1 is None or e2 is None:
            problems.append("the requested cells were not both changed")
        elif not (e1.new == e2.old and e2.new == e1.old):
            problems.append("the two requested cells were not exchanged")
    else:
        witnessed = any(
            e1.new == e2.old and e2.new == e1.old
            for i, e1 in enumerate(line_entries)
            for e2 in line_entries[i + 1 :]
        )
        if not witnessed:
            problems.append("no pair of line cells was exchanged")
    for e in trade.entries:
        r, c = e.cell
        if state.prescribed[r - 1, c - 1]:
            problems.append(f"prescribed cell {e.cell} is in the trade")
        if e.old in avoid:
            problems.append(f"cell {e.cell} holding avoided symbol {e.old} traded")
        if state.amasks[r - 1][c - 1] >> (e.new - 1) & 1:
            if not state.amasks[r - 1][c - 1] >> (e.old - 1) & 1:
                problems.append(f"new conflict created at {e.cell}")
    return problems


def fix_cell(state: SolverState, cell: Cell | tuple[int, int]) -> Trade:
    """A trade of at most 69 cells putting P-hat's entry into a prescribed
    cell without creating conflicts or breaking other fixed cells.

    Built per the fix-cell lemma: choose a donor cell carrying the current
    symbol, two auxiliary symbols, perform four row/column exchanges that
    avoid both symbols of interest, then close with three intercalate
    swaps.
    """
    r1, c1 = (cell.row - 1, cell.col - 1) if isinstance(cell, Cell) else (
        cell[0] - 1,
        cell[1] - 1,
    )
    n = state.n
    s1 = int(state.grid[r1, c1])
    s2 = int(state.phat[r1, c1])
    if not state.prescribed[r1, c1]:
        raise InvalidInput(f"cell {(r1 + 1, c1 + 1)} is not prescribed")
    if s1 == s2:
        raise InvalidInput(f"cell {(r1 + 1, c1 + 1)} already agrees with P-hat")

    params = state.params
    strict = params.fallback_policy == "strict"
    c_n = params.c_of_n(n)
    f_n = params.f_of_n(n)
    presc_bound = 2 * c_n + 2 * params.d * n
    dist_bound = 4 * (c_n + params.d * n + params.alpha * n + f_n)
    standing_ok = (
        int(state.presc_sym.max(initial=0)) <= presc_bound
        and float(state.sym_tally.max(initial=0)) <= dist_bound
    )
    feasible = fix_cell_feasibility_lhs(params, n) > 1
    if not (standing_ok and feasible):
        if strict:
            raise FeasibilityUnmet(
                f"fix-cell feasibility fails at n={n} "
                f"(standing={standing_ok}, inequality={feasible})"
            )
        state.note_relaxation("feasibility")

    avoid = frozenset((s1, s2))
    c3 = int(state.row_pos[r1, s2])
    r3 = int(state.col_pos[c1, s2])
    rng = state.rng

    donor_rows = [int(x) for x in rng.permutation(n) if int(x) != r1]
    s3_cands = [int(s) for s in rng.permutation(n) + 1 if int(s) not in (s1, s2)]
    s4_cands = list(s3_cands)
    rng.shuffle(s4_cands)

    # per-level budgets of stage-exchange searches, so a stuck cell fails
    # over to the next relaxation level in bounded time; the locality
    # levels have near-zero hit rates once the square is saturated with
    # disturbed cells, so their budgets shrink with the fresh supply
    fresh = 1.0 - float(state.disturbed.mean())
    budgets = {
        LEVEL_FULL: max(40, int(500 * fresh**3)),
        LEVEL_NO_OVERLOAD: max(30, int(300 * fresh**3)),
        LEVEL_NO_LOCALITY: 400,
    }
    for level in _levels_for(params.fallback_policy):
        # fast path: one exchange swapping the target with the cell that
        # already holds P-hat's entry in its row or column; any valid
        # trade is acceptable and this one disturbs a third of the cells
        # the four-exchange composition does
        trade = _direct_fix(state, r1, c1, s1, s2, level, rng)
        if trade is None:
            trade = _fix_cell_attempt(
                state, r1, c1, r3, c3, s1, s2, avoid, donor_rows,
                s3_cands, s4_cands, level, rng, budgets[level],
            )
        if trade is not None:
            if level > LEVEL_FULL:
                state.note_relaxation(RELAXATION_NAMES[level])
            return trade
    raise NoValidDonorCell(
        f"no valid fix-cell trade for {(r1 + 1, c1 + 1)} at any relaxation level"
    )


def _direct_fix(state, r1, c1, s1, s2, level, rng):
    """Exchange the target with the s2-cell of its own row or column."""
    for kind in ("row", "col"):
        ctx = _Ctx(state, False, set())
        if kind == "row":
            second = int(ctx.row_pos[r1, s2])
            view = _CtxView(ctx, transposed=False)
            found = _exchange_search(
                view, r1, c1, second, frozenset(), level, rng, ends_exempt=True
            )
        else:
            second = int(ctx.col_pos[c1, s2])
            view = _CtxView(ctx, transposed=True)
            found = _exchange_search(
                view, c1, r1, second, frozenset(), level, rng, ends_exempt=True
            )
        if found is None:
            continue
        _, _, ops = found
        for cells4 in ops:
            ctx.apply_swap(cells4 if kind == "row" else _transpose_op(cells4))
        trade = ctx.trade_vs_state()
        if not verify_fix_trade(state, trade, Cell(r1 + 1, c1 + 1)):
            return trade
    return None


def _fix_cell_attempt(
    state, r1, c1, r3, c3, s1, s2, avoid, donor_rows, s3_cands, s4_cands,
    level, rng, budget,
):
    F_state = lambda r, c, s: bool(state.amasks[r][c] >> (s - 1) & 1)  # noqa: E731
    spent = [0]
    for r4 in donor_rows:
        if spent[0] >= budget:
            break
        c4 = int(state.row_pos[r4, s1])
        if r4 == r3 or c4 == c3 or c4 == c1:
            continue
        c2 = int(state.row_pos[r4, s2])
        r2 = int(state.col_pos[c4, s2])
        if state.prescribed[r4, c4] or state.prescribed[r4, c2] or state.prescribed[r2, c4]:
            continue
        if level < LEVEL_NO_LOCALITY and state.disturbed[r4, c4]:
            continue
        if F_state(r4, c4, s2):
            continue
        if F_state(r3, c2, s2) or F_state(r2, c3, s2):
            continue
        if F_state(r4, c1, s1) or F_state(r1, c4, s1):
            continue
        if state.prescribed[r4, c1] or state.prescribed[r2, c3] or state.prescribed[r3, c2] or state.prescribed[r1, c4]:
            continue
        pinned = {
            (r1, c1), (r1, c3), (r1, c4), (r2, c3), (r2, c4),
            (r3, c1), (r3, c2), (r4, c1), (r4, c2), (r4, c4),
        }
        trade = _fix_with_donor(
            state, r1, c1, r2, c2, r3, c3, r4, c4, s1, s2, avoid,
            s3_cands, s4_cands, pinned, level, rng, budget, spent,
        )
        if trade is not None:
            return trade
    return None


def _rank_by_shortcut(state, cands, kind, line, target_pos):
    """Order symbol candidates so those whose exchange collapses to a
    single 4-cell swap come first (smaller trades, fewer fresh cells)."""
    if kind == "row":
        u = int(state.grid[line, target_pos])
        shortcut = []
        rest = []
        for s in cands:
            second = int(state.row_pos[line, s])
            if int(state.col_pos[target_pos, s]) == int(state.col_pos[second, u]):
                shortcut.append(s)
            else:
                rest.append(s)
        return shortcut + rest
    u = int(state.grid[target_pos, line])
    shortcut = []
    rest = []
    for s in cands:
        second = int(state.col_pos[line, s])
        if int(state.row_pos[target_pos, s]) == int(state.row_pos[second, u]):
            shortcut.append(s)
        else:
            rest.append(s)
    return shortcut + rest


def _fix_with_donor(
    state, r1, c1, r2, c2, r3, c3, r4, c4, s1, s2, avoid,
    s3_cands, s4_cands, pinned, level, rng, budget, spent,
):
    s3_ranked = _rank_by_shortcut(state, s3_cands, "row", r1, c4)
    for s3 in s3_ranked:
        if spent[0] >= budget:
            return None
        if state.amasks[r1][c3] >> (s3 - 1) & 1 or state.amasks[r2][c4] >> (s3 - 1) & 1:
            continue
        if level < LEVEL_NO_OVERLOAD and float(state.sym_tally[s3]) > state.dn:
            continue
        ctx = _Ctx(state, False, set(pinned))
        spent[0] += 2
        if not _stage_exchange(ctx, "row", r1, c4, s3, avoid, level, rng):
            continue
        if not _stage_exchange(ctx, "col", c3, r2, s3, avoid, level, rng):
            continue
        s4_ranked = _rank_by_shortcut(state, s4_cands, "col", c1, r4)
        for s4 in s4_ranked:
            if spent[0] >= budget:
                return None
            if s4 == s3:
                continue
            if state.amasks[r4][c2] >> (s4 - 1) & 1 or state.amasks[r3][c1] >> (s4 - 1) & 1:
                continue
            if level < LEVEL_NO_OVERLOAD and float(state.sym_tally[s4]) > state.dn:
                continue
            snap = _snapshot(ctx)
            spent[0] += 2
            ok = _stage_exchange(ctx, "col", c1, r4, s4, avoid, level, rng) and _stage_exchange(
                ctx, "row", r3, c2, s4, avoid, level, rng
            )
            if ok:
                trade = _close_fix(ctx, state, r1, c1, r2, c2, r3, c3, r4, c4, s1, s2, s3, s4)
                if trade is not None:
                    return trade
            _restore(ctx, snap)
        # s4 exhausted for this s3; try the next s3 from scratch
    return None


def cycle_rescue(state: SolverState, cell: Cell) -> Trade | None:
    """Flip the (s1, s2) symbol cycle through a stuck prescribed cell.

    A symbol-cycle flip is always a Latin-to-Latin trade; it is accepted
    only when it is at most 69 cells, touches no fixed prescribed cell,
    changes at most two other (disagreeing) prescribed cells, and creates
    no conflict. Used by the pipeline as a last resort when the lemma
    machinery finds nothing; it does not satisfy the lemma's two-cells-
    with-s1 accounting, so it is a separate operation, not a fix_cell
    result.
    """
    r1, c1 = cell.row - 1, cell.col - 1
    s1 = int(state.grid[r1, c1])
    s2 = int(state.phat[r1, c1])
    if s1 == s2 or not state.prescribed[r1, c1]:
        return None
    entries = []
    other_prescribed = 0
    r, c, sym = r1, c1, s1
    while True:
        new = s2 if sym == s1 else s1
        if state.amasks[r][c] >> (new - 1) & 1:
            return None
        if (r, c) != (r1, c1) and state.prescribed[r, c]:
            if int(state.phat[r, c]) == sym:
                return None  # would break a fixed cell
            other_prescribed += 1
            if other_prescribed > 2:
                return None
        entries.append(TradeEntry(Cell(r + 1, c + 1), sym, new))
        if sym == s1:
            c = int(state.row_pos[r, s2])  # walk the row to its s2 cell
            sym = s2
        else:
            r = int(state.col_pos[c, s1])  # walk the column to its s1 cell
            sym = s1
        if (r, c) == (r1, c1):
            break
        if len(entries) > 69:
            return None
    if len(entries) > 69:
        return None
    return Trade(tuple(entries))


def _stage_exchange(ctx, kind, line, target_pos, sym, avoid, level, rng) -> bool:
    """Bring ``sym`` into the cell at (line, target_pos) of the working
    grid via one exchange; no-op when it is already there. The first cell
    is temporarily unpinned so the exchange may touch it."""
    if kind == "row":
        if int(ctx.grid[line, target_pos]) == sym:
            return True
        second = int(ctx.row_pos[line, sym])
        first_cell = (line, target_pos)
    else:
        if int(ctx.grid[target_pos, line]) == sym:
            return True
        second = int(ctx.col_pos[line, sym])
        first_cell = (target_pos, line)
    unpinned = first_cell in ctx.pinned
    if unpinned:
        ctx.pinned.discard(first_cell)
    try:
        view = _CtxView(ctx, transposed=(kind == "col"))
        found = _exchange_search(view, line, target_pos, second, avoid, level, rng)
    finally:
        if unpinned:
            ctx.pinned.add(first_cell)
    if found is None:
        return False
    _, _, ops = found
    for cells4 in ops:
        ctx.apply_swap(cells4 if kind == "row" else _transpose_op(cells4))
    return True


def _transpose_op(cells4):
    """Map ((r1,c1),(r1,c2),(r2,c1),(r2,c2)) in a transposed frame back to
    the base frame, preserving the positional pattern apply_swap expects."""
    (r1, c1), (_, c2), (r2, _), (_, _) = cells4
    return ((c1, r1), (c1, r2), (c2, r1), (c2, r2))


class _CtxView:
    """Adapter presenting a _Ctx (possibly transposed) with the _Ctx
    interface expected by the exchange search."""

    __slots__ = ("c", "T", "n", "half", "_pinned")

    def __init__(self, c: _Ctx, transposed: bool):
        self.c = c
        self.T = transposed
        self.n = c.n
        self.half = c.half
        self._pinned = (
            {(q, p) for (p, q) in c.pinned} if transposed else c.pinned
        )

    @property
    def grid(self):
        return self.c.grid.T if self.T else self.c.grid

    @property
    def grid0(self):
        return self.c.grid0.T if self.T else self.c.grid0

    @property
    def row_pos(self):
        return self.c.col_pos if self.T else self.c.row_pos

    @property
    def col_pos(self):
        return self.c.row_pos if self.T else self.c.col_pos

    @property
    def row_pos0(self):
        return self.c.col_pos0 if self.T else self.c.row_pos0

    @property
    def col_pos0(self):
        return self.c.row_pos0 if self.T else self.c.col_pos0

    @property
    def disturbed(self):
        return self.c.disturbed.T if self.T else self.c.disturbed

    @property
    def prescribed(self):
        return self.c.prescribed.T if self.T else self.c.prescribed

    @property
    def pinned(self):
        return self._pinned

    def forbids(self, r, c, s):
        if self.T:
            r, c = c, r
        return self.c.forbids(r, c, s)

    @property
    def sym_over_v(self):
        return self.c.sym_over_v

    def row_over(self, r):
        return self.c.col_over(r) if self.T else self.c.row_over(r)

    def col_over(self, c):
        return self.c.row_over(c) if self.T else self.c.col_over(c)

    def sym_over(self, s):
        return self.c.sym_over(s)


def _snapshot(ctx: _Ctx):
    return (
        ctx.grid.copy(),
        ctx.row_pos.copy(),
        ctx.col_pos.copy(),
        ctx.disturbed.copy(),
    )


def _restore(ctx: _Ctx, snap) -> None:
    ctx.grid[:] = snap[0]
    ctx.row_pos[:] = snap[1]
    ctx.col_pos[:] = snap[2]
    ctx.disturbed[:] = snap[3]


def _close_fix(ctx, state, r1, c1, r2, c2, r3, c3, r4, c4, s1, s2, s3, s4):
    """Verify and perform the three closing swaps, then build and verify
    the composed trade."""
    g = ctx.grid
    want = [
        (r1, c3, s2), (r1, c4, s3), (r2, c3, s3), (r2, c4, s2),
        (r3, c1, s2), (r3, c2, s4), (r4, c1, s4), (r4, c2, s2),
        (r1, c1, s1), (r4, c4, s1),
    ]
    for (r, c, s) in want:
        if int(g[r, c]) != s:
            return None
    ctx.apply_swap(((r1, c3), (r1, c4), (r2, c3), (r2, c4)))
    ctx.apply_swap(((r3, c1), (r3, c2), (r4, c1), (r4, c2)))
    ctx.apply_swap(((r1, c1), (r1, c4), (r4, c1), (r4, c4)))
    trade = ctx.trade_vs_state()
    if verify_fix_trade(state, trade, Cell(r1 + 1, c1 + 1)):
        return None
    return trade


def verify_fix_trade(state: SolverState, trade: Trade, cell: Cell) -> list[str]:
    """Check the fix-cell lemma's verifiable postconditions; returns a list
    of violations (empty when clean)."""
    problems = []
    r1, c1 = cell.row - 1, cell.col - 1
    s1 = int(state.grid[r1, c1])
    s2 = int(state.phat[r1, c1])
    if len(trade) > 69:
        problems.append(f"trade uses {len(trade)} cells > 69")
    try:
        apply_trade(state.square, trade)
    except Exception as exc:  # noqa: BLE001
        return [f"trade does not apply cleanly: {exc}"]
    target = [e for e in trade.entries if e.cell == cell]
    if not target or target[0].new != s2:
        problems.append("target cell does not receive P-hat's entry")
    others = [
        e
        for e in trade.entries
        if e.cell != cell and state.prescribed[e.cell.row - 1, e.cell.col - 1]
    ]
    if len(others) > 2:
        problems.append(f"{len(others)} other prescribed cells changed > 2")
    for e in others:
        if int(state.phat[e.cell.row - 1, e.cell.col - 1]) == e.old:
            problems.append(f"fixed prescribed cell {e.cell} was broken")
    n_s1 = sum(1 for e in trade.entries if e.old == s1)
    n_s2 = sum(1 for e in trade.entries if e.old == s2)
    if n_s1 != 2:
        problems.append(f"{n_s1} cells held {s1} (expected exactly 2)")
    if n_s2 > 4:
        problems.append(f"{n_s2} cells held {s2} (expected at most 4)")
    for e in trade.entries:
        r, c = e.cell
        if state.amasks[r - 1][c - 1] >> (e.new - 1) & 1:
            if not state.amasks[r - 1][c - 1] >> (e.old - 1) & 1:
                problems.append(f"new conflict created at {e.cell}")
    return problems
