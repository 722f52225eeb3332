"""Command-line surface: generate, solve, verify, replay, sweep, preflight.

Exit codes are a stable contract: 0 solved/clean, 1 verify failed,
2 usage/parse/input error, 3 infeasible, 4 gave up.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import zlib
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import gen
from .core import Params, verify_solution
from .errors import InvalidInput, LatinAvoidError
from .formats import read_instance, write_instance
from .pipeline import INFEASIBLE, SOLVED, preflight, solve
from .scramble import Scramble, unscramble
from .core import LatinSquare, Trade, TradeEntry, Cell, apply_trade

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_GAVE_UP = 4


def paper_profile(**overrides) -> Params:
    """The source constants: alpha = beta = 1e-5, k = 1/500, eps = 1e-4,
    d = 1/20, c(n) = floor(n/35000), f(n) = floor(n/17500)."""
    base = dict(
        alpha=1e-5,
        beta=1e-5,
        epsilon=1e-4,
        k=1 / 500,
        d=1 / 20,
        c_slope=Fraction(1, 35000),
        c_min=0,
        f_slope=Fraction(1, 17500),
        f_min=0,
        fallback_policy="strict",
    )
    base.update(overrides)
    return Params(**base)


def desk_profile(**overrides) -> Params:
    """Workable constants for desk-scale orders (n from about 30): alpha =
    beta = 1/20, eps = 1/10, d = 1/4, k = 1/10, c(n) = max(1, n//20),
    f(n) = max(1, n//10). Carries no theorem guarantee; the solver runs
    best-effort and says so in its stats."""
    base = dict(
        alpha=1 / 20,
        beta=1 / 20,
        epsilon=1 / 10,
        k=1 / 10,
        d=1 / 4,
        c_slope=Fraction(1, 20),
        c_min=1,
        f_slope=Fraction(1, 10),
        f_min=1,
        fallback_policy="best-effort",
    )
    base.update(overrides)
    return Params(**base)


def _params_from_args(args) -> Params:
    if args.profile == "paper":
        return paper_profile(rng_seed=args.seed)
    if args.profile == "desk":
        return desk_profile(rng_seed=args.seed)
    kw: dict = {"rng_seed": args.seed}
    for name in ("alpha", "beta", "eps", "k", "d"):
        v = getattr(args, name, None)
        if v is not None:
            kw["epsilon" if name == "eps" else name] = v
    if getattr(args, "c_slope", None) is not None:
        kw["c_slope"] = Fraction(args.c_slope).limit_denominator(10**6)
    if getattr(args, "f_slope", None) is not None:
        kw["f_slope"] = Fraction(args.f_slope).limit_denominator(10**6)
    return desk_profile(**kw)


def _add_profile_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=("paper", "desk", "custom"), default="desk")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--d", type=float)
    p.add_argument("--c-slope", dest="c_slope", type=float)
    p.add_argument("--f-slope", dest="f_slope", type=float)
    p.add_argument("--seed", type=int, default=0)


def cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.model == "pls":
        if args.n is None or args.p is None:
            raise InvalidInput("--model pls needs --n and --p")
        P = gen.random_pls(gen.RandomPlsModel(args.n, args.p), rng)
        write_instance(args.out, P, text=args.text)
    elif args.model == "array":
        if args.n is None or args.m is None:
            raise InvalidInput("--model array needs --n and --m")
        P = read_instance(args.avoid, "pls") if args.avoid else None
        A = gen.random_array(gen.RandomArrayModel(args.n, args.m), rng, P)
        write_instance(args.out, A, text=args.text)
    else:  # frontier
        if args.r is None or args.t is None:
            raise InvalidInput("--model frontier needs --r and --t")
        variant = "literal" if args.literal_c_block else "corrected"
        P, A = gen.infeasible_pair(gen.FrontierPoint(args.r, args.t), variant)
        out = Path(args.out)
        write_instance(out.with_suffix(".pls.json"), P, text=args.text)
        write_instance(out.with_suffix(".array.json"), A, text=args.text)
    return EXIT_OK


def _write_trade_log(path, outcome) -> None:
    with open(path, "w") as fh:
        fh.write(
            json.dumps(
                {
                    "type": "start",
                    "n": outcome.starting_square.n,
                    "square": outcome.starting_square.grid.tolist(),
                },
                separators=(",", ":"),
            )
            + "\n"
        )
        for i, trade in enumerate(outcome.trade_log, start=1):
            cells = [[e.cell.row, e.cell.col, e.old, e.new] for e in trade.entries]
            fh.write(
                json.dumps({"type": "trade", "q": i, "cells": sorted(cells)},
                           separators=(",", ":")) + "\n"
            )
        fh.write(
            json.dumps(
                {
                    "type": "scramble",
                    "sigma": list(outcome.scramble.sigma),
                    "tau": list(outcome.scramble.tau),
                },
                separators=(",", ":"),
            )
            + "\n"
        )
        fh.write(
            json.dumps(
                {"type": "final", "square": outcome.square.grid.tolist()},
                separators=(",", ":"),
            )
            + "\n"
        )


def cmd_solve(args) -> int:
    P = read_instance(args.pls, "pls")
    A = read_instance(args.array, "array")
    params = _params_from_args(args)
    outcome = solve(P, A, params)
    stats = dict(outcome.stats)
    stats["status"] = outcome.status
    print(json.dumps(stats, sort_keys=True, default=str))
    if outcome.status == SOLVED:
        if args.out:
            write_instance(args.out, outcome.square, text=args.text)
        if args.trade_log and outcome.starting_square is not None:
            _write_trade_log(args.trade_log, outcome)
        return EXIT_OK
    if outcome.status == INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_GAVE_UP


def cmd_verify(args) -> int:
    L = read_instance(args.latin, "latin")
    P = read_instance(args.pls, "pls")
    A = read_instance(args.array, "array")
    report = verify_solution(L, P, A)
    doc = {
        "clean": report.clean,
        "latin_violations": list(report.latin_violations),
        "completion_violations": [list(c) for c in report.completion_violations],
        "conflict_violations": [list(c) for c in report.conflict_violations],
    }
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK if report.clean else EXIT_VERIFY_FAILED


def cmd_replay(args) -> int:
    """Re-apply a trade log from its starting square and audit each step."""
    records = [json.loads(line) for line in Path(args.log).read_text().splitlines()]
    if not records or records[0].get("type") != "start":
        raise InvalidInput("trade log must begin with a start record")
    square = LatinSquare(np.array(records[0]["square"], dtype=int))
    scramble = None
    final = None
    for rec in records[1:]:
        if rec["type"] == "trade":
            entries = tuple(
                TradeEntry(Cell(r, c), old, new) for r, c, old, new in rec["cells"]
            )
            square = apply_trade(square, Trade(entries))
        elif rec["type"] == "scramble":
            scramble = Scramble(tuple(rec["sigma"]), tuple(rec["tau"]))
        elif rec["type"] == "final":
            final = np.array(rec["square"], dtype=int)
    if scramble is not None:
        square = unscramble(square, scramble)
    ok = final is None or bool(np.array_equal(square.grid, final))
    print(json.dumps({"replayed": True, "matches_final": ok}))
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def _sweep_seed(base_seed: int, tag: str, rep: int) -> int:
    return zlib.crc32(f"{base_seed}|{tag}|{rep}".encode()) & 0x7FFFFFFF


def cmd_sweep(args) -> int:
    params_base = _params_from_args(args)
    n = args.n
    rows = []
    p_values = [float(x) for x in args.p_values.split(",")] if args.p_values else None
    m_values = [int(x) for x in args.m_values.split(",")] if args.m_values else None
    a_values = [float(x) for x in args.alpha_values.split(",")] if args.alpha_values else None
    b_values = [float(x) for x in args.beta_values.split(",")] if args.beta_values else None
    if args.grid == "pm":
        if p_values is None or m_values is None:
            raise InvalidInput("--grid pm needs --p-values and --m-values")
        points = [(p, m) for p in p_values for m in m_values]
        names = ("p", "m")
    else:
        if a_values is None or b_values is None:
            raise InvalidInput("--grid alpha-beta needs --alpha-values and --beta-values")
        points = [(a, b) for a in a_values for b in b_values]
        names = ("alpha", "beta")
    oracle_ok = n <= params_base.oracle_threshold
    for x, y in points:
        solved = 0
        agree = 0
        checked = 0
        q_total = 0
        t_total = 0.0
        for rep in range(args.replicates):
            seed = _sweep_seed(args.seed, f"{x}:{y}", rep)
            rng = np.random.default_rng(seed)
            if args.grid == "pm":
                P = gen.random_pls(gen.RandomPlsModel(n, x), rng)
                A = gen.random_array(gen.RandomArrayModel(n, int(y)), rng, P)
            else:
                P = gen.random_pls(gen.RandomPlsModel(n, x), rng)
                A = gen.random_array(
                    gen.RandomArrayModel(n, max(0, round(y * n))), rng, P
                )
            params = Params(
                **{
                    **params_base.__dict__,
                    "rng_seed": seed,
                }
            )
            t0 = time.perf_counter()
            out = solve(P, A, params)
            t_total += time.perf_counter() - t0
            if out.status == SOLVED:
                solved += 1
                q_total += out.stats.get("q", 0)
            if oracle_ok:
                from .oracle import solve_exact

                checked += 1
                exact = solve_exact(P, A)
                if (exact.status == "solved") == (out.status == SOLVED):
                    agree += 1
        rows.append(
            {
                "grid": args.grid,
                "n": n,
                names[0]: x,
                names[1]: y,
                "replicates": args.replicates,
                "solved": solved,
                "success_rate": solved / args.replicates,
                "oracle_checked": checked,
                "oracle_agree_rate": (agree / checked) if checked else "",
                "mean_q": (q_total / solved) if solved else "",
                "mean_time_s": t_total / args.replicates,
            }
        )
    fieldnames = list(rows[0].keys()) if rows else []
    out_fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out_fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out_fh.close()
    return EXIT_OK


def cmd_preflight(args) -> int:
    params = _params_from_args(args)
    report = preflight(params, args.n)
    print(json.dumps(report.as_dict(), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="latinavoid",
        description="Complete sparse partial Latin squares while avoiding "
        "forbidden-symbol arrays.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write instance files")
    g.add_argument("--model", choices=("pls", "array", "frontier"), required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--m", type=int)
    g.add_argument("--r", type=int)
    g.add_argument("--t", type=int)
    g.add_argument("--literal-c-block", action="store_true")
    g.add_argument("--avoid", help="PLS file whose entries are removed from the array")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--text", action="store_true", help="write the text grid format")
    g.set_defaults(fn=cmd_generate)

    s = sub.add_parser("solve", help="complete a PLS avoiding an array")
    s.add_argument("pls")
    s.add_argument("array")
    s.add_argument("--out")
    s.add_argument("--text", action="store_true")
    s.add_argument("--trade-log")
    _add_profile_flags(s)
    s.set_defaults(fn=cmd_solve)

    v = sub.add_parser("verify", help="check a claimed solution")
    v.add_argument("latin")
    v.add_argument("pls")
    v.add_argument("array")
    v.set_defaults(fn=cmd_verify)

    r = sub.add_parser("replay", help="re-apply and audit a trade log")
    r.add_argument("--log", required=True)
    r.set_defaults(fn=cmd_replay)

    w = sub.add_parser("sweep", help="success-rate grid, CSV output")
    w.add_argument("--grid", choices=("pm", "alpha-beta"), required=True)
    w.add_argument("--n", type=int, required=True)
    w.add_argument("--p-values", dest="p_values")
    w.add_argument("--m-values", dest="m_values")
    w.add_argument("--alpha-values", dest="alpha_values")
    w.add_argument("--beta-values", dest="beta_values")
    w.add_argument("--replicates", type=int, default=20)
    w.add_argument("--out")
    _add_profile_flags(w)
    w.set_defaults(fn=cmd_sweep)

    f = sub.add_parser("preflight", help="evaluate the proof inequalities")
    f.add_argument("--n", type=int, required=True)
    _add_profile_flags(f)
    f.set_defaults(fn=cmd_preflight)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (InvalidInput, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LatinAvoidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
