import numpy as np
import pytest

from latinavoid.core import Intercalate, LatinSquare


def naive_strong_census(grid):
    """O(n^4) double-loop oracle for the strong intercalate census."""
    n = grid.shape[0]
    half = n // 2
    counts = np.zeros((n, n), dtype=int)
    for r1 in range(n):
        for r2 in range(r1 + 1, n):
            for c1 in range(n):
                for c2 in range(c1 + 1, n):
                    a, b = grid[r1, c1], grid[r1, c2]
                    if a != b and grid[r2, c2] == a and grid[r2, c1] == b:
                        if (a <= half) != (b <= half):
                            for (x, y) in ((r1, c1), (r1, c2), (r2, c1), (r2, c2)):
                                counts[x, y] += 1
    return counts


def brute_intercalates(L):
    """All intercalates of a square by exhaustive row/column pairs."""
    n = L.n
    g = L.grid
    out = set()
    for r1 in range(1, n + 1):
        for r2 in range(r1 + 1, n + 1):
            for c1 in range(1, n + 1):
                for c2 in range(c1 + 1, n + 1):
                    a, b = g[r1 - 1, c1 - 1], g[r1 - 1, c2 - 1]
                    if a != b and g[r2 - 1, c2 - 1] == a and g[r2 - 1, c1 - 1] == b:
                        out.add(Intercalate((r1, r2), (c1, c2)))
    return out


def random_latin_square(n, rng):
    """A random-ish Latin square via a shuffled cyclic table."""
    base = (np.add.outer(np.arange(n), np.arange(n)) % n) + 1
    rows = rng.permutation(n)
    cols = rng.permutation(n)
    syms = rng.permutation(n) + 1
    grid = syms[base[np.ix_(rows, cols)] - 1]
    return LatinSquare(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


@pytest.fixture
def desk_params():
    from latinavoid.cli import desk_profile

    return desk_profile()
