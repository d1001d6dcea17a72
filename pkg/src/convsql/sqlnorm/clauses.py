"""Canonicalization, value masking, and clause decomposition.

``normalize`` turns one SELECT statement into a canonical tree: lowercased
keywords and identifiers, table aliases resolved to base table names, literals
replaced by a uniform ``?`` placeholder, commutative operands ordered, and
inert parentheses dropped. ``decompose_clauses`` splits the canonical tree
into comparable clause components; ``exact_match`` is component-wise equality
on those, so two queries that differ only in literal values compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from ..corpus import DatabaseSchema
from .parser import (
    AGGREGATE_FUNCS,
    Between,
    Binary,
    Case,
    Cast,
    Col,
    Conn,
    Exists,
    FromItem,
    Func,
    InList,
    InQuery,
    IsNull,
    Like,
    Lit,
    MultipleStatements,
    Query,
    QuerySource,
    SelectCore,
    SelectItem,
    Star,
    SubqueryExpr,
    TableSource,
    Unary,
    parse,
    render_expr,
    render_query,
)
from .tokenizer import ParseError

_MASKED = Lit("param", "?")


class GoldUnparseable(Exception):
    """Raised when a reference query cannot be parsed; predictions never raise."""

    def __init__(self, message: str, locus: str = ""):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


@dataclass(frozen=True)
class NormalizedQuery:
    query: Query
    sql: str

    def __eq__(self, other) -> bool:
        return isinstance(other, NormalizedQuery) and self.sql == other.sql

    def __hash__(self) -> int:
        return hash(self.sql)


@dataclass(frozen=True)
class ClauseSet:
    """Value-masked decomposition of one query into comparable components.

    ``order_by`` is the only order-sensitive component. ``set_ops`` members
    pair the operator label with the canonical text of the extra arm so that
    compound queries with different arms stay distinguishable.
    """

    select_items: frozenset     # of (expression text, is_aggregate, distinct)
    from_sources: frozenset     # base table names / derived-table fingerprints
    join_conditions: frozenset  # of (side, side) pairs, sides sorted
    where_predicates: frozenset
    group_by: frozenset
    having: frozenset
    order_by: tuple             # of (expression text, 'asc'|'desc')
    limit_present: bool
    set_ops: frozenset          # of (op label, arm fingerprint)
    nested_query_count: int

    def to_dict(self) -> dict:
        return {
            "select_items": [
                {"expression": e, "aggregate": a, "distinct": d}
                for e, a, d in sorted(self.select_items)],
            "from_sources": sorted(self.from_sources),
            "join_conditions": [list(p) for p in sorted(self.join_conditions)],
            "where_predicates": sorted(self.where_predicates),
            "group_by": sorted(self.group_by),
            "having": sorted(self.having),
            "order_by": [{"expression": e, "direction": d} for e, d in self.order_by],
            "limit_present": self.limit_present,
            "set_ops": [list(p) for p in sorted(self.set_ops)],
            "nested_query_count": self.nested_query_count,
        }


# ---------------------------------------------------------------------------
# scope-aware normalization


class _Scope:
    """Alias environment of one SELECT core, chained to enclosing scopes."""

    def __init__(self, parent: Optional["_Scope"] = None):
        self.parent = parent
        self.alias_map: dict[str, str] = {}   # alias/table (lower) -> canonical name
        self.tables: list[str] = []           # canonical source names, FROM order
        self.derived_cols: dict[str, Optional[set]] = {}  # None means unknown (star)

    def lookup(self, name: str) -> Optional[str]:
        scope: Optional[_Scope] = self
        while scope is not None:
            if name in scope.alias_map:
                return scope.alias_map[name]
            scope = scope.parent
        return None

    def owner_of(self, column: str, schema: Optional[DatabaseSchema]) -> Optional[str]:
        scope: Optional[_Scope] = self
        while scope is not None:
            candidates = []
            for t in scope.tables:
                if t in scope.derived_cols:
                    cols = scope.derived_cols[t]
                    if cols is None or column in cols:
                        candidates.append(t)
                elif schema is not None:
                    table = schema.table(t)
                    if table is not None and column in {c.lower() for c in table.column_names()}:
                        candidates.append(t)
                else:
                    candidates.append(t)
            if len(set(candidates)) == 1:
                return candidates[0]
            if candidates:
                return None  # ambiguous here; do not fall through to parents
            if len(scope.tables) == 1 and scope.tables[0] not in scope.derived_cols:
                # single concrete table whose schema we cannot confirm
                if schema is None or schema.table(scope.tables[0]) is None:
                    return scope.tables[0]
            if scope.tables:
                return None
            scope = scope.parent
        return None


def _derived_output_cols(query: Query) -> Optional[set]:
    cols: set = set()
    for item in query.arms[0][1].items:
        if isinstance(item.expr, Star):
            return None
        if item.alias:
            cols.add(item.alias.lower())
        elif isinstance(item.expr, Col):
            cols.add(item.expr.name.lower())
    return cols


def _normalize_query(q: Query, parent: Optional[_Scope],
                     schema: Optional[DatabaseSchema]) -> Query:
    new_arms = []
    first_scope = first_aliases = None
    for op, core in q.arms:
        new_core, scope, aliases = _normalize_core(core, parent, schema)
        if first_scope is None:
            first_scope, first_aliases = scope, aliases
        new_arms.append((op, new_core))
    order_by = tuple(
        (_normalize_ordering_term(e, first_scope, first_aliases, schema), d)
        for e, d in q.order_by)
    limit = _MASKED if q.limit is not None else None
    offset = _MASKED if q.offset is not None else None
    return Query(tuple(new_arms), order_by, limit, offset)


def _normalize_ordering_term(e, scope, aliases, schema):
    # bare integers are positional column references, not maskable values
    if isinstance(e, Lit) and e.kind == "number" and e.value.isdigit():
        return e
    return _normalize_expr(_subst_aliases(e, aliases), scope, schema)


def _normalize_core(core: SelectCore, parent: Optional[_Scope],
                    schema: Optional[DatabaseSchema]):
    scope = _Scope(parent)
    sub_index = 0
    resolved_sources = []
    for fi in core.from_items:
        src = fi.source
        if isinstance(src, TableSource):
            base = src.name.lower()
            if src.alias:
                scope.alias_map[src.alias.lower()] = base
            scope.alias_map.setdefault(base, base)
            scope.tables.append(base)
            resolved_sources.append((fi, TableSource(base, None)))
        else:
            sub_index += 1
            canon = f"sub{sub_index}"
            inner = _normalize_query(src.query, parent, schema)
            if src.alias:
                scope.alias_map[src.alias.lower()] = canon
            scope.alias_map[canon] = canon
            scope.tables.append(canon)
            scope.derived_cols[canon] = _derived_output_cols(src.query)
            resolved_sources.append((fi, QuerySource(inner, canon)))

    new_from = []
    for k, (fi, src) in enumerate(resolved_sources):
        on = fi.on
        if fi.using and k > 0:
            prev = resolved_sources[k - 1][1]
            prev_name = prev.name if isinstance(prev, TableSource) else prev.alias
            cur_name = src.name if isinstance(src, TableSource) else src.alias
            eqs = tuple(Binary("=", Col(prev_name, u.lower()), Col(cur_name, u.lower()))
                        for u in fi.using)
            on = eqs[0] if len(eqs) == 1 else Conn("and", eqs)
        if on is not None:
            on = _normalize_expr(on, scope, schema)
        new_from.append(FromItem(src, join=fi.join, on=on))

    aliases = {item.alias.lower(): item.expr for item in core.items if item.alias}
    items = tuple(SelectItem(_normalize_expr(it.expr, scope, schema), None)
                  for it in core.items)
    where = _normalize_expr(core.where, scope, schema) if core.where is not None else None
    group_by = tuple(
        _normalize_ordering_term(g, scope, aliases, schema) for g in core.group_by)
    having = None
    if core.having is not None:
        having = _normalize_expr(_subst_aliases(core.having, aliases), scope, schema)
    new_core = SelectCore(distinct=core.distinct, items=items,
                          from_items=tuple(new_from), where=where,
                          group_by=group_by, having=having)
    return new_core, scope, aliases


def _subst_aliases(e, aliases: dict):
    """Replace references to select-item aliases with the aliased expression."""
    if not aliases:
        return e
    if isinstance(e, Col) and e.table is None and e.name.lower() in aliases:
        return aliases[e.name.lower()]
    if isinstance(e, Unary):
        return Unary(e.op, _subst_aliases(e.operand, aliases))
    if isinstance(e, Binary):
        return Binary(e.op, _subst_aliases(e.left, aliases),
                      _subst_aliases(e.right, aliases))
    if isinstance(e, Conn):
        return Conn(e.op, tuple(_subst_aliases(t, aliases) for t in e.terms))
    if isinstance(e, Func):
        return Func(e.name, tuple(_subst_aliases(a, aliases) for a in e.args), e.distinct)
    if isinstance(e, Between):
        return Between(_subst_aliases(e.expr, aliases), _subst_aliases(e.low, aliases),
                       _subst_aliases(e.high, aliases), e.negated)
    if isinstance(e, IsNull):
        return IsNull(_subst_aliases(e.expr, aliases), e.negated)
    return e


def _normalize_expr(e, scope: _Scope, schema: Optional[DatabaseSchema]):
    if isinstance(e, Lit):
        if e.kind in ("number", "string", "bool"):
            return _MASKED
        return e
    if isinstance(e, Col):
        name = e.name.lower()
        if e.table is not None:
            base = scope.lookup(e.table.lower()) or e.table.lower()
            return Col(base, name)
        owner = scope.owner_of(name, schema)
        return Col(owner, name)
    if isinstance(e, Star):
        if e.table is not None:
            return Star(scope.lookup(e.table.lower()) or e.table.lower())
        return e
    if isinstance(e, Func):
        return Func(e.name.lower(),
                    tuple(_normalize_expr(a, scope, schema) for a in e.args),
                    e.distinct)
    if isinstance(e, Unary):
        if e.op in ("-", "+") and isinstance(e.operand, Lit) and e.operand.kind == "number":
            return _MASKED
        operand = _normalize_expr(e.operand, scope, schema)
        if e.op == "not":
            if isinstance(operand, IsNull):
                return replace(operand, negated=not operand.negated)
            if isinstance(operand, (Between, InList, InQuery, Like)):
                return replace(operand, negated=not operand.negated)
        return Unary(e.op, operand)
    if isinstance(e, Binary):
        op = e.op
        left = _normalize_expr(e.left, scope, schema)
        right = _normalize_expr(e.right, scope, schema)
        if op == ">":
            op, left, right = "<", right, left
        elif op == ">=":
            op, left, right = "<=", right, left
        if op in ("=", "!=") and render_expr(left) > render_expr(right):
            left, right = right, left
        return Binary(op, left, right)
    if isinstance(e, Conn):
        terms = []
        for t in e.terms:
            t = _normalize_expr(t, scope, schema)
            if isinstance(t, Conn) and t.op == e.op:
                terms.extend(t.terms)
            else:
                terms.append(t)
        terms.sort(key=render_expr)
        return Conn(e.op, tuple(terms))
    if isinstance(e, Between):
        return Between(_normalize_expr(e.expr, scope, schema),
                       _normalize_expr(e.low, scope, schema),
                       _normalize_expr(e.high, scope, schema), e.negated)
    if isinstance(e, InList):
        return InList(_normalize_expr(e.expr, scope, schema), (_MASKED,), e.negated)
    if isinstance(e, InQuery):
        return InQuery(_normalize_expr(e.expr, scope, schema),
                       _normalize_query(e.query, scope, schema), e.negated)
    if isinstance(e, Like):
        escape = _normalize_expr(e.escape, scope, schema) if e.escape is not None else None
        return Like(_normalize_expr(e.expr, scope, schema),
                    _normalize_expr(e.pattern, scope, schema),
                    op=e.op, negated=e.negated, escape=escape)
    if isinstance(e, IsNull):
        return IsNull(_normalize_expr(e.expr, scope, schema), e.negated)
    if isinstance(e, Exists):
        return Exists(_normalize_query(e.query, scope, schema))
    if isinstance(e, SubqueryExpr):
        return SubqueryExpr(_normalize_query(e.query, scope, schema))
    if isinstance(e, Case):
        operand = _normalize_expr(e.operand, scope, schema) if e.operand is not None else None
        whens = tuple((_normalize_expr(c, scope, schema), _normalize_expr(r, scope, schema))
                      for c, r in e.whens)
        else_ = _normalize_expr(e.else_, scope, schema) if e.else_ is not None else None
        return Case(operand, whens, else_)
    if isinstance(e, Cast):
        return Cast(_normalize_expr(e.expr, scope, schema), e.type_name.lower())
    raise TypeError(f"cannot normalize {type(e).__name__}")


def normalize(sql: str, schema: Optional[DatabaseSchema] = None) -> NormalizedQuery:
    """Parse and canonicalize one SELECT statement.

    The schema, when given, disambiguates unqualified column references.
    Raises ParseError or MultipleStatements.
    """
    tree = _normalize_query(parse(sql), None, schema)
    return NormalizedQuery(query=tree, sql=render_query(tree))


# ---------------------------------------------------------------------------
# clause decomposition


def contains_aggregate(e) -> bool:
    """True when the expression applies an aggregate function (subqueries opaque)."""
    if isinstance(e, Func):
        if e.name.lower() in AGGREGATE_FUNCS:
            return True
        return any(contains_aggregate(a) for a in e.args)
    if isinstance(e, Unary):
        return contains_aggregate(e.operand)
    if isinstance(e, Binary):
        return contains_aggregate(e.left) or contains_aggregate(e.right)
    if isinstance(e, Conn):
        return any(contains_aggregate(t) for t in e.terms)
    if isinstance(e, Case):
        parts = [e.operand, e.else_] + [x for w in e.whens for x in w]
        return any(contains_aggregate(p) for p in parts if p is not None)
    if isinstance(e, Cast):
        return contains_aggregate(e.expr)
    return False


def _conjuncts(e) -> list:
    if e is None:
        return []
    if isinstance(e, Conn) and e.op == "and":
        out = []
        for t in e.terms:
            out.extend(_conjuncts(t))
        return out
    return [e]


def _is_join_condition(e) -> bool:
    return (isinstance(e, Binary) and e.op == "="
            and isinstance(e.left, Col) and isinstance(e.right, Col)
            and e.left.table is not None and e.right.table is not None
            and e.left.table != e.right.table)


def _nested_in_expr(e) -> int:
    if isinstance(e, (InQuery,)):
        return _nested_in_expr(e.expr) + 1 + _nested_in_query(e.query)
    if isinstance(e, Exists):
        return 1 + _nested_in_query(e.query)
    if isinstance(e, SubqueryExpr):
        return 1 + _nested_in_query(e.query)
    if isinstance(e, Unary):
        return _nested_in_expr(e.operand)
    if isinstance(e, Binary):
        return _nested_in_expr(e.left) + _nested_in_expr(e.right)
    if isinstance(e, Conn):
        return sum(_nested_in_expr(t) for t in e.terms)
    if isinstance(e, Func):
        return sum(_nested_in_expr(a) for a in e.args)
    if isinstance(e, Between):
        return sum(_nested_in_expr(x) for x in (e.expr, e.low, e.high))
    if isinstance(e, InList):
        return _nested_in_expr(e.expr) + sum(_nested_in_expr(x) for x in e.items)
    if isinstance(e, Like):
        total = _nested_in_expr(e.expr) + _nested_in_expr(e.pattern)
        return total + (_nested_in_expr(e.escape) if e.escape is not None else 0)
    if isinstance(e, IsNull):
        return _nested_in_expr(e.expr)
    if isinstance(e, Case):
        parts = [e.operand, e.else_] + [x for w in e.whens for x in w]
        return sum(_nested_in_expr(p) for p in parts if p is not None)
    if isinstance(e, Cast):
        return _nested_in_expr(e.expr)
    return 0


def _nested_in_core(core: SelectCore) -> int:
    total = 0
    for fi in core.from_items:
        if isinstance(fi.source, QuerySource):
            total += 1 + _nested_in_query(fi.source.query)
        if fi.on is not None:
            total += _nested_in_expr(fi.on)
    for item in core.items:
        total += _nested_in_expr(item.expr)
    if core.where is not None:
        total += _nested_in_expr(core.where)
    for g in core.group_by:
        total += _nested_in_expr(g)
    if core.having is not None:
        total += _nested_in_expr(core.having)
    return total


def _nested_in_query(q: Query) -> int:
    total = max(0, len(q.arms) - 1)
    for _, core in q.arms:
        total += _nested_in_core(core)
    for e, _ in q.order_by:
        total += _nested_in_expr(e)
    return total


def decompose_clauses(nq: NormalizedQuery) -> ClauseSet:
    """Split a normalized query into its comparable clause components."""
    q = nq.query
    core = q.arms[0][1]

    select_items = frozenset(
        (render_expr(it.expr), contains_aggregate(it.expr), core.distinct)
        for it in core.items)

    from_sources = set()
    join_conds = set()
    where_preds = set()
    for fi in core.from_items:
        if isinstance(fi.source, TableSource):
            from_sources.add(fi.source.name)
        else:
            from_sources.add(f"({render_query(fi.source.query)})")
        for c in _conjuncts(fi.on):
            if _is_join_condition(c):
                join_conds.add(tuple(sorted([render_expr(c.left), render_expr(c.right)])))
            else:
                where_preds.add(render_expr(c))
    for c in _conjuncts(core.where):
        if _is_join_condition(c):
            join_conds.add(tuple(sorted([render_expr(c.left), render_expr(c.right)])))
        else:
            where_preds.add(render_expr(c))

    having = frozenset(render_expr(c) for c in _conjuncts(core.having))
    group_by = frozenset(render_expr(g) for g in core.group_by)
    order_by = tuple((render_expr(e), d) for e, d in q.order_by)
    set_ops = frozenset(
        ("union" if op.startswith("union") else op, render_core_fingerprint(arm))
        for op, arm in q.arms[1:])

    return ClauseSet(
        select_items=select_items,
        from_sources=frozenset(from_sources),
        join_conditions=frozenset(join_conds),
        where_predicates=frozenset(where_preds),
        group_by=group_by,
        having=having,
        order_by=order_by,
        limit_present=q.limit is not None,
        set_ops=set_ops,
        nested_query_count=_nested_in_query(q),
    )


def render_core_fingerprint(core: SelectCore) -> str:
    from .parser import render_core
    return render_core(core)


def exact_match(pred: str, gold: str,
                schema: Optional[DatabaseSchema] = None) -> bool:
    """Clause-level structural equality with literal values masked out.

    An unparseable prediction is a defined mismatch; an unparseable gold
    raises GoldUnparseable.
    """
    try:
        gold_cs = decompose_clauses(normalize(gold, schema))
    except (ParseError, MultipleStatements) as exc:
        raise GoldUnparseable(str(exc)) from None
    try:
        pred_cs = decompose_clauses(normalize(pred, schema))
    except (ParseError, MultipleStatements):
        return False
    return pred_cs == gold_cs
