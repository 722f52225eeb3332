"""Best-effort endgame repair.

The lemma-driven fix loop's choice sets are provably non-empty only in
the paper's asymptotic regime; at desk scale the square saturates with
disturbed cells before every prescribed cell is fixed. The leftovers are
finished by large-neighborhood re-completion: force every disagreeing
prescribed cell to its target, empty the cells those placements displace
(plus, on escalation, a seeded-random sample of unconstrained cells), and
re-complete the holes exactly with the oracle engine under the full
row/column/avoidance constraints. The resulting assignment lands as one
ordinary trade, so the log stays replayable, and the pipeline's final
verification vouches for the square as usual.
"""

from __future__ import annotations

import numpy as np

from .core import Cell, PartialLatinSquare, Trade, TradeEntry
from .oracle import SearchLimits, solve_exact
from .trades import SolverState


def _subproblem(
    state: SolverState, extra_holes: int | None, rng: np.random.Generator
) -> PartialLatinSquare | None:
    """Current square with disagreeing cells forced to P-hat and the
    displaced duplicates emptied, plus extra free cells (all of them when
    ``extra_holes`` is None, which reduces to completing P-hat afresh)."""
    n = state.n
    grid = state.grid.astype(np.int32).copy()
    targets = []
    mask = state.prescribed & (grid != state.phat)
    for r, c in zip(*np.nonzero(mask)):
        targets.append((int(r), int(c), int(state.phat[r, c])))
    if not targets:
        return None
    forced = {(r, c) for (r, c, _) in targets}
    for r, c, s in targets:
        grid[r, c] = 0  # clear first so duplicate scans don't see old values
    for r, c, s in targets:
        for rr in range(n):
            if grid[rr, c] == s and (rr, c) not in forced:
                grid[rr, c] = 0
        for cc in range(n):
            if grid[r, cc] == s and (r, cc) not in forced:
                grid[r, cc] = 0
        grid[r, c] = s
    if extra_holes is None:
        grid[~state.prescribed] = 0
    elif extra_holes:
        free_r, free_c = np.nonzero((grid != 0) & ~state.prescribed)
        if len(free_r):
            take = min(extra_holes, len(free_r))
            picks = rng.choice(len(free_r), size=take, replace=False)
            grid[free_r[picks], free_c[picks]] = 0
    return PartialLatinSquare(grid)


def lns_finish(
    state: SolverState,
    rng: np.random.Generator,
    node_budget: int = 20_000,
) -> bool:
    """Re-complete around the remaining violations, widening the emptied
    neighborhood each round down to a full re-completion of P-hat.
    Returns True when the state is clean."""
    n = state.n
    for extra in (0, 2 * n, None):
        sub = _subproblem(state, extra_holes=extra, rng=rng)
        if sub is None:
            return True
        res = solve_exact(sub, state.A, SearchLimits(max_nodes=node_budget))
        if res.status != "solved":
            continue
        before = state.grid
        after = res.square.grid
        diff = np.nonzero(before != after)
        entries = tuple(
            TradeEntry(
                Cell(int(r) + 1, int(c) + 1), int(before[r, c]), int(after[r, c])
            )
            for r, c in zip(*diff)
        )
        if entries:
            state.record_trade(Trade(entries))
        return not state.disagreeing_cells()
    return False
