"""Orchestrates Steps I-IV into the end-to-end solve contract.

Small orders go straight to the exact oracle. Larger ones run: starting
square, scramble sampling, conflict recoloring, then the fix-cell loop
over prescribed cells in ascending (row, col) order; the result is
unscrambled and verified against the original inputs before it is
returned, so soundness never depends on which fallbacks fired. A solve
attempt that dies inside the fix stage is retried with a fresh scramble seed up
to ``params.max_restarts`` times.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .coloring import (
    build_conflict_graph,
    build_lists,
    build_R_and_merge,
    list_edge_color_bounded,
)
from .core import (
    AvoidanceArray,
    LatinSquare,
    Params,
    PartialLatinSquare,
    Trade,
    validate_pls,
    verify_solution,
)
from .errors import (
    ColoringFailed,
    ConstructionFailed,
    FeasibilityUnmet,
    InputClash,
    InvalidInput,
    LatinAvoidError,
    NoValidColumns,
    NoValidDonorCell,
    ScrambleExhausted,
)
from .oracle import SearchLimits, solve_exact
from .repair import lns_finish
from .scramble import Scramble, sample_scramble, unscramble
from .starting import build_even, build_odd
from .trades import (
    SolverState,
    cycle_rescue,
    exchange_feasibility_lhs,
    fix_cell,
    fix_cell_feasibility_lhs,
)

SOLVED = "solved"
INFEASIBLE = "infeasible"
GAVE_UP = "gave_up"


@dataclass(frozen=True)
class Inequality:
    name: str
    lhs: float
    rhs: float
    holds: bool


@dataclass(frozen=True)
class PreflightReport:
    """Evaluation of every inequality the proof machinery relies on."""

    n: int
    inequalities: tuple[Inequality, ...]

    @property
    def all_hold(self) -> bool:
        return all(q.holds for q in self.inequalities)

    @property
    def mode(self) -> str:
        return "guaranteed" if self.all_hold else "best-effort"

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "mode": self.mode,
            "inequalities": [
                {"name": q.name, "lhs": q.lhs, "rhs": q.rhs, "holds": q.holds}
                for q in self.inequalities
            ],
        }


def preflight(params: Params, n: int) -> PreflightReport:
    """Evaluate the proof's inequalities at these parameters and order.

    The pipeline runs in "guaranteed" mode only when all of them hold;
    otherwise every guarantee is replaced by the postcondition verifiers.
    """
    c = params.c_of_n(n)
    f = params.f_of_n(n)
    exch = exchange_feasibility_lhs(params, n, a=2)
    eq2 = fix_cell_feasibility_lhs(params, n)
    coloring_lhs = (
        n - params.beta * n - 2 * params.alpha * n - 2 * c - (n * c / f if f else float("inf"))
    )
    degree_rhs = n - params.beta * n - 2 * params.alpha * n
    budget_lhs = params.k * n * n
    budget_rhs = 69 * n * (params.alpha * n + c)
    items = (
        Inequality("row_column_exchange", exch, 6, exch > 6),
        Inequality("fix_cell_eq2", eq2, 1, eq2 > 1),
        Inequality("coloring_recolor", coloring_lhs, 1, coloring_lhs >= 1),
        Inequality("degree_within_lists", c, degree_rhs, c <= degree_rhs),
        Inequality("disturbance_budget", budget_lhs, budget_rhs, budget_lhs >= budget_rhs),
    )
    return PreflightReport(n, items)


@dataclass
class SolveOutcome:
    """Result plus run statistics; when a square is returned it has
    already passed verify_solution against the original inputs."""

    status: str
    square: LatinSquare | None
    stats: dict
    trade_log: tuple[Trade, ...] = ()
    scramble: Scramble | None = None
    starting_square: LatinSquare | None = None


def solve(
    P: PartialLatinSquare,
    A: AvoidanceArray,
    params: Params = Params(),
    rng: np.random.Generator | None = None,
) -> SolveOutcome:
    """Complete P into a Latin square that avoids A.

    Raises InputClash when a cell of P carries a symbol forbidden by the
    same cell of A, and InvalidInput for malformed P. Below the oracle
    threshold the answer is exact (including infeasibility); above it a
    failed search reports gave_up, never infeasible.
    """
    t0 = time.perf_counter()
    if P.n != A.n:
        raise InvalidInput("order mismatch between P and A")
    report = validate_pls(P)
    if not report.ok:
        raise InvalidInput("P is not a valid PLS: " + "; ".join(report.problems))
    for cell, s in P.cells():
        if A.contains(cell.row, cell.col, s):
            raise InputClash(f"P and A clash at {cell}")
    n = P.n
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    pre = preflight(params, n)
    stats: dict = {
        "n": n,
        "mode": pre.mode,
        "seed": params.rng_seed,
        "scramble_tries": 0,
        "q": 0,
        "relaxations": {},
        "restarts": 0,
        "oracle_nodes": None,
        "timings": {},
    }

    if P.is_complete():
        square = LatinSquare(P.grid)
        stats["timings"]["total_s"] = time.perf_counter() - t0
        _assert_clean(square, P, A)
        return SolveOutcome(SOLVED, square, stats)

    if n <= params.oracle_threshold:
        res = solve_exact(P, A, SearchLimits())
        stats["oracle_nodes"] = res.nodes
        stats["timings"]["total_s"] = time.perf_counter() - t0
        if res.status == "solved":
            _assert_clean(res.square, P, A)
            return SolveOutcome(SOLVED, res.square, stats)
        if res.status == "infeasible":
            return SolveOutcome(INFEASIBLE, None, stats)
        return SolveOutcome(GAVE_UP, None, stats)

    last_error: str | None = None
    for attempt in range(max(1, params.max_restarts)):
        stats["restarts"] = attempt
        child_seed = int(rng.integers(0, 2**62))
        try:
            outcome = _attempt(P, A, params, child_seed, stats)
        except (
            NoValidColumns,
            NoValidDonorCell,
            FeasibilityUnmet,
            ColoringFailed,
            ScrambleExhausted,
            ConstructionFailed,
        ) as exc:
            last_error = f"{type(exc).__name__}: {exc}"
            continue
        stats["timings"]["total_s"] = time.perf_counter() - t0
        return outcome
    stats["last_error"] = last_error
    stats["timings"]["total_s"] = time.perf_counter() - t0
    return SolveOutcome(GAVE_UP, None, stats)


def _attempt(
    P: PartialLatinSquare,
    A: AvoidanceArray,
    params: Params,
    seed: int,
    stats: dict,
) -> SolveOutcome:
    n = P.n
    rng = np.random.default_rng(seed)
    t_start = time.perf_counter()
    if n % 2 == 0:
        L0 = build_even(n)
    else:
        L0 = build_odd(n, slack=None)
        stats["odd_census_slack"] = L0.census_slack
    stats["timings"]["starting_s"] = time.perf_counter() - t_start

    t_scr = time.perf_counter()
    strict = params.fallback_policy == "strict"
    try:
        sample = sample_scramble(L0, A, P, params, rng)
    except ScrambleExhausted as exc:
        if strict or exc.best is None:
            raise
        sample = exc.best
        stats.setdefault("relaxations", {}).setdefault("scramble_best_effort", 0)
        stats["relaxations"]["scramble_best_effort"] += 1
    stats["scramble_tries"] = sample.tries
    stats["timings"]["scramble_s"] = time.perf_counter() - t_scr

    t_col = time.perf_counter()
    A1, P1 = sample.A, sample.P
    G = build_conflict_graph(L0, A1, P1)
    lists = build_lists(G, A1, P1)
    coloring = list_edge_color_bounded(G, lists, params.f_of_n(n), rng)
    phat = build_R_and_merge(G, coloring, P1)
    stats["conflict_edges"] = len(G.edges)
    stats["timings"]["coloring_s"] = time.perf_counter() - t_col

    t_fix = time.perf_counter()
    state = SolverState(L0, phat, A1, params, rng)
    guaranteed = stats.get("mode") == "guaranteed"
    q_limit = n * (params.alpha * n + params.c_of_n(n))
    hard_cap = 3 * phat.filled_count() + 16
    # cells are processed in ascending (row, col); a cell whose search
    # comes up empty is deferred and retried once later trades have
    # reshaped the square around it (at least retry_delta trades apart)
    failed_at: dict = {}
    fail_budget = phat.filled_count() // 2 + 30
    fails = 0
    retry_delta = 6
    stalled = False
    while not stalled:
        disagreeing = sorted(state.disagreeing_cells())
        if not disagreeing:
            break
        progressed = False
        for target in disagreeing:
            if int(state.grid[target.row - 1, target.col - 1]) == int(
                state.phat[target.row - 1, target.col - 1]
            ):
                continue  # fixed as a side effect of an earlier trade
            last_q = failed_at.get(target)
            if last_q is not None and state.q - last_q < retry_delta:
                continue
            if guaranteed and state.q >= q_limit:
                raise NoValidDonorCell(
                    f"fix budget n(alpha*n + c(n)) = {q_limit:.0f} exhausted"
                )
            if state.q >= hard_cap or fails > fail_budget:
                stalled = True
                break
            try:
                trade = fix_cell(state, target)
            except (NoValidDonorCell, NoValidColumns, FeasibilityUnmet):
                if params.fallback_policy == "strict":
                    raise
                trade = cycle_rescue(state, target)
                if trade is None:
                    fails += 1
                    failed_at[target] = state.q
                    continue
                stats.setdefault("relaxations", {}).setdefault("cycle_rescue", 0)
                stats["relaxations"]["cycle_rescue"] += 1
            state.record_trade(trade)
            failed_at.pop(target, None)
            progressed = True
        if not progressed:
            stalled = True
    remaining = state.disagreeing_cells()
    if remaining:
        # the lemma machinery is out of moves; finish with the
        # min-conflicts cycle-flip repair (best-effort only)
        if params.fallback_policy == "strict":
            raise NoValidDonorCell(
                f"{len(remaining)} prescribed cells remain with no reachable fix"
            )
        if not lns_finish(state, rng):
            raise NoValidDonorCell(
                f"{len(state.disagreeing_cells())} prescribed cells "
                "remain after re-completion repair"
            )
        stats.setdefault("relaxations", {})["lns_repair"] = len(remaining)
    stats["q"] = state.q
    stats["relaxations"] = dict(
        sorted({**stats.get("relaxations", {}), **state.relaxations}.items())
    )
    stats["timings"]["fix_s"] = time.perf_counter() - t_fix

    L_q = state.square
    final = unscramble(L_q, sample.scramble)
    _assert_clean(final, P, A)
    return SolveOutcome(
        SOLVED,
        final,
        stats,
        trade_log=tuple(state.trade_log),
        scramble=sample.scramble,
        starting_square=L0.square,
    )


def _assert_clean(L: LatinSquare, P: PartialLatinSquare, A: AvoidanceArray) -> None:
    report = verify_solution(L, P, A)
    if not report.clean:
        raise AssertionError(
            "solver returned an unsound square (bug): "
            f"latin={report.latin_violations} "
            f"completion={report.completion_violations[:5]} "
            f"conflicts={report.conflict_violations[:5]}"
        )
