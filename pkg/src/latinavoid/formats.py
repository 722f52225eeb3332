"""Instance file formats.

Canonical JSON is the source of truth and round-trips byte-stably:
``{"kind": ..., "n": ..., "cells": [[row, col, symbol-or-list], ...]}``
with cells sorted row-major, compact separators, sorted keys, and a
trailing newline. A human-readable text grid (first line n, then rows
with "." for empty; array cells comma-join their symbols) is accepted on
input and available for output.
"""

from __future__ import annotations

import json
from pathlib import Path

from .core import AvoidanceArray, LatinSquare, PartialLatinSquare
from .errors import InvalidInput

KINDS = ("pls", "array", "latin")


def dumps_instance(obj) -> str:
    """Canonical JSON for a square or array."""
    if isinstance(obj, AvoidanceArray):
        kind = "array"
        cells = [
            [cell.row, cell.col, sorted(symbols)] for cell, symbols in obj.cells()
        ]
    elif isinstance(obj, LatinSquare):
        kind = "latin"
        cells = [[cell.row, cell.col, s] for cell, s in obj.cells()]
    elif isinstance(obj, PartialLatinSquare):
        kind = "pls"
        cells = [[cell.row, cell.col, s] for cell, s in obj.cells()]
    else:
        raise InvalidInput(f"cannot serialize {type(obj).__name__}")
    doc = {"kind": kind, "n": obj.n, "cells": sorted(cells)}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def dumps_text(obj) -> str:
    """Human-readable grid; first line is the order."""
    n = obj.n
    lines = [str(n)]
    if isinstance(obj, AvoidanceArray):
        for r in range(1, n + 1):
            row = []
            for c in range(1, n + 1):
                syms = sorted(obj.symbols_at(r, c))
                row.append(",".join(map(str, syms)) if syms else ".")
            lines.append(" ".join(row))
    else:
        for r in range(1, n + 1):
            row = [str(obj.get(r, c)) if obj.get(r, c) else "." for c in range(1, n + 1)]
            lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def loads_instance(text: str, expect: str | None = None):
    """Parse JSON or text-grid content into a core object."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        obj = _loads_json(stripped)
    else:
        obj = _loads_text(text, expect)
    if expect is not None:
        actual = (
            "array"
            if isinstance(obj, AvoidanceArray)
            else "latin"
            if isinstance(obj, LatinSquare)
            else "pls"
        )
        if expect == "pls" and actual == "latin":
            pass  # a full square is a fine PLS
        elif expect == "latin" and actual == "pls" and obj.is_complete():
            obj = LatinSquare(obj.grid)
        elif actual != expect:
            raise InvalidInput(f"expected a {expect} file, got {actual}")
    return obj


def _loads_json(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"not valid JSON: {exc}") from exc
    kind = doc.get("kind")
    n = doc.get("n")
    cells = doc.get("cells", [])
    if kind not in KINDS or not isinstance(n, int) or n < 1:
        raise InvalidInput("instance file needs kind in pls/array/latin and n >= 1")
    if kind == "array":
        masks = [[0] * n for _ in range(n)]
        for r, c, syms in cells:
            _check_cell(r, c, n)
            for s in syms:
                _check_sym(s, n)
                masks[r - 1][c - 1] |= 1 << (s - 1)
        return AvoidanceArray(n, masks)
    grid = [[0] * n for _ in range(n)]
    for r, c, s in cells:
        _check_cell(r, c, n)
        _check_sym(s, n)
        grid[r - 1][c - 1] = s
    return LatinSquare(grid) if kind == "latin" else PartialLatinSquare.from_rows(grid)


def _loads_text(text: str, expect: str | None):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidInput("empty instance file")
    try:
        n = int(lines[0].strip())
    except ValueError as exc:
        raise InvalidInput("first line of a text grid must be the order n") from exc
    if len(lines) != n + 1:
        raise InvalidInput(f"expected {n} grid lines, found {len(lines) - 1}")
    rows = [ln.split() for ln in lines[1:]]
    if any(len(row) != n for row in rows):
        raise InvalidInput("grid lines must have n entries")
    if expect == "array" or any("," in tok for row in rows for tok in row):
        masks = [[0] * n for _ in range(n)]
        for r, row in enumerate(rows):
            for c, tok in enumerate(row):
                if tok == ".":
                    continue
                for part in tok.split(","):
                    s = int(part)
                    _check_sym(s, n)
                    masks[r][c] |= 1 << (s - 1)
        return AvoidanceArray(n, masks)
    grid = [[0 if tok == "." else int(tok) for tok in row] for row in rows]
    pls = PartialLatinSquare.from_rows(grid)
    if expect == "latin" or (expect is None and pls.is_complete()):
        try:
            return LatinSquare(pls.grid)
        except InvalidInput:
            if expect == "latin":
                raise
    return pls


def _check_cell(r, c, n):
    if not (isinstance(r, int) and isinstance(c, int) and 1 <= r <= n and 1 <= c <= n):
        raise InvalidInput(f"cell ({r},{c}) out of range for n={n}")


def _check_sym(s, n):
    if not (isinstance(s, int) and 1 <= s <= n):
        raise InvalidInput(f"symbol {s} out of range for n={n}")


def read_instance(path, expect: str | None = None):
    return loads_instance(Path(path).read_text(), expect)


def write_instance(path, obj, text: bool = False) -> None:
    Path(path).write_text(dumps_text(obj) if text else dumps_instance(obj))
