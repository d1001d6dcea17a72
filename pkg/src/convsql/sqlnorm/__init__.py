"""SQL canonicalization and value-masked clause matching."""

from .clauses import (
    ClauseSet,
    GoldUnparseable,
    NormalizedQuery,
    contains_aggregate,
    decompose_clauses,
    exact_match,
    normalize,
)
from .parser import MultipleStatements, parse, render_query
from .tokenizer import ParseError, has_outer_order_by, tokenize

__all__ = [
    "ClauseSet",
    "GoldUnparseable",
    "MultipleStatements",
    "NormalizedQuery",
    "ParseError",
    "contains_aggregate",
    "decompose_clauses",
    "exact_match",
    "has_outer_order_by",
    "normalize",
    "parse",
    "render_query",
    "tokenize",
]
