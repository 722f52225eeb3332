"""Exception types shared across the package."""


class LatinAvoidError(Exception):
    """Base class for all package errors."""


class InvalidInput(LatinAvoidError):
    """Malformed grid, order mismatch, or out-of-range symbol."""


class InputClash(InvalidInput):
    """A cell of P carries a symbol that its A-cell forbids."""


class OddOrder(InvalidInput):
    """An even order was required."""


class EvenOrder(InvalidInput):
    """An odd order was required."""


class NotAnIntercalate(LatinAvoidError):
    """The given four cells do not form an intercalate of the square."""


class OldMismatch(LatinAvoidError):
    """A trade entry's old symbol does not match the square."""


class NotLatinAfterTrade(LatinAvoidError):
    """Applying the trade would break the Latin property."""


class ConstructionFailed(LatinAvoidError):
    """A certified construction did not meet its certificate."""


class ScrambleExhausted(LatinAvoidError):
    """No sampled scramble passed the well-behaved check.

    Carries the best-scoring sample seen so that callers running in
    best-effort mode can proceed with it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ColoringFailed(LatinAvoidError):
    """Bounded list edge coloring ran out of options."""


class MergeClash(LatinAvoidError):
    """The recolored cells collide with the prescribed PLS."""


class FeasibilityUnmet(LatinAvoidError):
    """A trade lemma's feasibility inequality fails for these parameters."""


class NoValidColumns(LatinAvoidError):
    """No admissible column/row choice remains for an exchange."""


class NoValidDonorCell(LatinAvoidError):
    """No admissible donor cell remains for a fix-cell trade."""


class NoAuxSymbol(LatinAvoidError):
    """No admissible auxiliary symbol remains for a fix-cell trade."""
