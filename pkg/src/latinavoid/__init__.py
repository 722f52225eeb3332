"""Completion of sparse partial Latin squares under forbidden-symbol arrays."""

from .core import (
    AvoidanceArray,
    Cell,
    Intercalate,
    LatinSquare,
    Params,
    PartialLatinSquare,
    Trade,
    TradeEntry,
    apply_trade,
    conflict_cells,
    is_alpha_dense,
    is_allowed_intercalate,
    is_mmm_array,
    is_strong_intercalate,
    prescribed_cells,
    swap_intercalate,
    validate_pls,
    verify_solution,
)

__all__ = [
    "AvoidanceArray",
    "Cell",
    "Intercalate",
    "LatinSquare",
    "Params",
    "PartialLatinSquare",
    "Trade",
    "TradeEntry",
    "apply_trade",
    "conflict_cells",
    "is_alpha_dense",
    "is_allowed_intercalate",
    "is_mmm_array",
    "is_strong_intercalate",
    "prescribed_cells",
    "swap_intercalate",
    "validate_pls",
    "verify_solution",
]
