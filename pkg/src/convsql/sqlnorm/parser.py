"""Recursive-descent parser and renderer for a SELECT-statement subset.

Covers joins, subqueries, set operations, aggregates, CASE and CAST; DML and
DDL are out of scope. The renderer emits canonical lowercase-keyword text that
re-parses to an equal tree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from .tokenizer import EOF, NAME, NUMBER, OP, PARAM, STRING, ParseError, Token, tokenize


class MultipleStatements(Exception):
    pass


# --- expression nodes -------------------------------------------------------

@dataclass(frozen=True)
class Lit:
    kind: str   # number | string | null | bool | param
    value: str


@dataclass(frozen=True)
class Col:
    table: Optional[str]
    name: str


@dataclass(frozen=True)
class Star:
    table: Optional[str] = None


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple
    distinct: bool = False


@dataclass(frozen=True)
class Unary:
    op: str     # not | - | +
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str     # comparison or arithmetic operator
    left: object
    right: object


@dataclass(frozen=True)
class Conn:
    op: str     # and | or
    terms: tuple


@dataclass(frozen=True)
class Between:
    expr: object
    low: object
    high: object
    negated: bool = False


@dataclass(frozen=True)
class InList:
    expr: object
    items: tuple
    negated: bool = False


@dataclass(frozen=True)
class InQuery:
    expr: object
    query: "Query"
    negated: bool = False


@dataclass(frozen=True)
class Like:
    expr: object
    pattern: object
    op: str = "like"    # like | glob
    negated: bool = False
    escape: Optional[object] = None


@dataclass(frozen=True)
class IsNull:
    expr: object
    negated: bool = False


@dataclass(frozen=True)
class Exists:
    query: "Query"


@dataclass(frozen=True)
class SubqueryExpr:
    query: "Query"


@dataclass(frozen=True)
class Case:
    operand: Optional[object]
    whens: tuple        # of (condition, result)
    else_: Optional[object] = None


@dataclass(frozen=True)
class Cast:
    expr: object
    type_name: str


# --- query structure --------------------------------------------------------

@dataclass(frozen=True)
class SelectItem:
    expr: object
    alias: Optional[str] = None


@dataclass(frozen=True)
class TableSource:
    name: str
    alias: Optional[str] = None


@dataclass(frozen=True)
class QuerySource:
    query: "Query"
    alias: Optional[str] = None


@dataclass(frozen=True)
class FromItem:
    source: Union[TableSource, QuerySource]
    join: Optional[str] = None   # None for the first item; else ',' or a join type
    on: Optional[object] = None
    using: tuple = ()


@dataclass(frozen=True)
class SelectCore:
    distinct: bool
    items: tuple            # of SelectItem
    from_items: tuple       # of FromItem; empty for bare SELECT
    where: Optional[object] = None
    group_by: tuple = ()
    having: Optional[object] = None


@dataclass(frozen=True)
class Query:
    arms: tuple             # of (set_op or None, SelectCore); first op is None
    order_by: tuple = ()    # of (expr, 'asc'|'desc')
    limit: Optional[object] = None
    offset: Optional[object] = None


_KEYWORDS = {
    "select", "distinct", "all", "from", "where", "group", "by", "having",
    "order", "limit", "offset", "union", "intersect", "except", "join",
    "inner", "left", "right", "full", "outer", "cross", "natural", "on",
    "using", "as", "and", "or", "not", "in", "like", "glob", "between", "is",
    "null", "case", "when", "then", "else", "end", "exists", "asc", "desc",
    "cast", "escape", "true", "false",
}

_JOIN_TYPES = {"inner", "left", "right", "full", "cross"}
_COMPARISONS = {"=", "==", "!=", "<>", "<", "<=", ">", ">="}
_CANON_OP = {"==": "=", "<>": "!="}

AGGREGATE_FUNCS = {"count", "sum", "avg", "min", "max", "total", "group_concat"}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    # -- token helpers

    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def at_kw(self, *words: str) -> bool:
        t = self.cur
        return t.kind == NAME and t.lower() in words

    def at_op(self, *ops: str) -> bool:
        t = self.cur
        return t.kind == OP and t.text in ops

    def take_kw(self, *words: str) -> bool:
        if self.at_kw(*words):
            self.advance()
            return True
        return False

    def expect_kw(self, word: str) -> None:
        if not self.take_kw(word):
            self.fail(f"expected {word.upper()}")

    def expect_op(self, op: str) -> None:
        if not self.at_op(op):
            self.fail(f"expected {op!r}")
        self.advance()

    def fail(self, message: str):
        raise ParseError(self.cur.pos, f"{message}, found {self.cur.text!r}")

    # -- grammar

    def parse_query(self) -> Query:
        arms = [(None, self.parse_core())]
        while True:
            if self.at_kw("union"):
                self.advance()
                op = "union all" if self.take_kw("all") else "union"
            elif self.at_kw("intersect"):
                self.advance()
                op = "intersect"
            elif self.at_kw("except"):
                self.advance()
                op = "except"
            else:
                break
            arms.append((op, self.parse_core()))

        order_by = ()
        if self.take_kw("order"):
            self.expect_kw("by")
            terms = []
            while True:
                e = self.parse_expr()
                direction = "asc"
                if self.take_kw("desc"):
                    direction = "desc"
                else:
                    self.take_kw("asc")
                terms.append((e, direction))
                if self.at_op(","):
                    self.advance()
                    continue
                break
            order_by = tuple(terms)

        limit = offset = None
        if self.take_kw("limit"):
            limit = self.parse_expr()
            if self.take_kw("offset"):
                offset = self.parse_expr()
            elif self.at_op(","):
                # LIMIT offset, count
                self.advance()
                offset, limit = limit, self.parse_expr()
        return Query(arms=tuple(arms), order_by=order_by, limit=limit, offset=offset)

    def parse_core(self) -> SelectCore:
        self.expect_kw("select")
        distinct = False
        if self.take_kw("distinct"):
            distinct = True
        else:
            self.take_kw("all")
        items = [self.parse_select_item()]
        while self.at_op(","):
            self.advance()
            items.append(self.parse_select_item())
        from_items: tuple = ()
        if self.take_kw("from"):
            from_items = self.parse_from()
        where = self.parse_expr() if self.take_kw("where") else None
        group_by: tuple = ()
        if self.take_kw("group"):
            self.expect_kw("by")
            exprs = [self.parse_expr()]
            while self.at_op(","):
                self.advance()
                exprs.append(self.parse_expr())
            group_by = tuple(exprs)
        having = self.parse_expr() if self.take_kw("having") else None
        return SelectCore(distinct=distinct, items=tuple(items),
                          from_items=from_items, where=where,
                          group_by=group_by, having=having)

    def parse_select_item(self) -> SelectItem:
        if self.at_op("*"):
            self.advance()
            return SelectItem(Star(None))
        # qualified star: name . *
        if (self.cur.kind == NAME and self.cur.lower() not in _KEYWORDS
                and self.toks[self.i + 1].kind == OP and self.toks[self.i + 1].text == "."
                and self.toks[self.i + 2].kind == OP and self.toks[self.i + 2].text == "*"):
            table = self.advance().text
            self.advance()
            self.advance()
            return SelectItem(Star(table))
        expr = self.parse_expr()
        alias = None
        if self.take_kw("as"):
            alias = self.parse_name("alias")
        elif self.cur.kind == NAME and self.cur.lower() not in _KEYWORDS:
            alias = self.advance().text
        return SelectItem(expr, alias)

    def parse_name(self, what: str) -> str:
        if self.cur.kind != NAME:
            self.fail(f"expected {what}")
        return self.advance().text

    def parse_from(self) -> tuple:
        items = [FromItem(self.parse_source())]
        while True:
            if self.at_op(","):
                self.advance()
                items.append(FromItem(self.parse_source(), join=","))
                continue
            join = self.parse_join_op()
            if join is None:
                break
            source = self.parse_source()
            on = None
            using: tuple = ()
            if self.take_kw("on"):
                on = self.parse_expr()
            elif self.take_kw("using"):
                self.expect_op("(")
                names = [self.parse_name("column")]
                while self.at_op(","):
                    self.advance()
                    names.append(self.parse_name("column"))
                self.expect_op(")")
                using = tuple(names)
            items.append(FromItem(source, join=join, on=on, using=using))
        return tuple(items)

    def parse_join_op(self) -> Optional[str]:
        save = self.i
        self.take_kw("natural")
        join = "inner"
        if self.cur.kind == NAME and self.cur.lower() in _JOIN_TYPES:
            join = self.advance().lower()
            self.take_kw("outer")
        if self.take_kw("join"):
            return join
        self.i = save
        return None

    def parse_source(self) -> Union[TableSource, QuerySource]:
        if self.at_op("("):
            self.advance()
            if not self.at_kw("select"):
                self.fail("expected subquery after '('")
            query = self.parse_query()
            self.expect_op(")")
            alias = self.parse_optional_alias()
            return QuerySource(query=query, alias=alias)
        name = self.parse_name("table name")
        return TableSource(name=name, alias=self.parse_optional_alias())

    def parse_optional_alias(self) -> Optional[str]:
        if self.take_kw("as"):
            return self.parse_name("alias")
        if self.cur.kind == NAME and self.cur.lower() not in _KEYWORDS:
            return self.advance().text
        return None

    # -- expressions, loosest to tightest binding

    def parse_expr(self):
        return self.parse_or()

    def parse_or(self):
        terms = [self.parse_and()]
        while self.take_kw("or"):
            terms.append(self.parse_and())
        return terms[0] if len(terms) == 1 else Conn("or", tuple(terms))

    def parse_and(self):
        terms = [self.parse_not()]
        while self.take_kw("and"):
            terms.append(self.parse_not())
        return terms[0] if len(terms) == 1 else Conn("and", tuple(terms))

    def parse_not(self):
        if self.take_kw("not"):
            return Unary("not", self.parse_not())
        return self.parse_predicate()

    def parse_predicate(self):
        e = self.parse_additive()
        while True:
            if self.cur.kind == OP and self.cur.text in _COMPARISONS:
                op = _canon_cmp(self.advance().text)
                e = Binary(op, e, self.parse_additive())
                continue
            negated = False
            save = self.i
            if self.take_kw("not"):
                negated = True
            if self.take_kw("between"):
                low = self.parse_additive()
                self.expect_kw("and")
                e = Between(e, low, self.parse_additive(), negated=negated)
                continue
            if self.take_kw("in"):
                e = self.parse_in_tail(e, negated)
                continue
            if self.at_kw("like", "glob"):
                op = self.advance().lower()
                pattern = self.parse_additive()
                escape = self.parse_additive() if self.take_kw("escape") else None
                e = Like(e, pattern, op=op, negated=negated, escape=escape)
                continue
            if negated:
                self.i = save
                break
            if self.take_kw("is"):
                neg = self.take_kw("not")
                self.expect_kw("null")
                e = IsNull(e, negated=neg)
                continue
            break
        return e

    def parse_in_tail(self, e, negated: bool):
        self.expect_op("(")
        if self.at_kw("select"):
            query = self.parse_query()
            self.expect_op(")")
            return InQuery(e, query, negated=negated)
        items = []
        if not self.at_op(")"):
            items.append(self.parse_expr())
            while self.at_op(","):
                self.advance()
                items.append(self.parse_expr())
        self.expect_op(")")
        return InList(e, tuple(items), negated=negated)

    def parse_additive(self):
        e = self.parse_multiplicative()
        while self.at_op("+", "-", "||"):
            op = self.advance().text
            e = Binary(op, e, self.parse_multiplicative())
        return e

    def parse_multiplicative(self):
        e = self.parse_unary()
        while self.at_op("*", "/", "%"):
            op = self.advance().text
            e = Binary(op, e, self.parse_unary())
        return e

    def parse_unary(self):
        if self.at_op("-", "+"):
            op = self.advance().text
            return Unary(op, self.parse_unary())
        return self.parse_primary()

    def parse_primary(self):
        t = self.cur
        if t.kind == NUMBER:
            self.advance()
            return Lit("number", t.text)
        if t.kind == STRING:
            self.advance()
            return Lit("string", t.text)
        if t.kind == PARAM:
            self.advance()
            return Lit("param", "?")
        if self.at_op("("):
            self.advance()
            if self.at_kw("select"):
                query = self.parse_query()
                self.expect_op(")")
                return SubqueryExpr(query)
            e = self.parse_expr()
            self.expect_op(")")
            return e
        if self.at_kw("null"):
            self.advance()
            return Lit("null", "null")
        if self.at_kw("true", "false"):
            return Lit("bool", self.advance().lower())
        if self.at_kw("exists"):
            self.advance()
            self.expect_op("(")
            query = self.parse_query()
            self.expect_op(")")
            return Exists(query)
        if self.at_kw("case"):
            return self.parse_case()
        if self.at_kw("cast"):
            self.advance()
            self.expect_op("(")
            e = self.parse_expr()
            self.expect_kw("as")
            parts = [self.parse_name("type name")]
            while self.cur.kind == NAME and not self.at_op(")"):
                parts.append(self.parse_name("type name"))
            self.expect_op(")")
            return Cast(e, " ".join(parts))
        if t.kind == NAME:
            nxt = self.toks[self.i + 1]
            if nxt.kind == OP and nxt.text == "(":
                return self.parse_func_call()
            if t.lower() in _KEYWORDS:
                self.fail("expected expression")
            self.advance()
            if self.at_op("."):
                self.advance()
                if self.at_op("*"):
                    self.advance()
                    return Star(t.text)
                return Col(t.text, self.parse_name("column name"))
            return Col(None, t.text)
        self.fail("expected expression")

    def parse_func_call(self):
        name = self.advance().text
        self.expect_op("(")
        distinct = self.take_kw("distinct")
        args: list = []
        if self.at_op("*"):
            self.advance()
            args.append(Star(None))
        elif not self.at_op(")"):
            args.append(self.parse_expr())
            while self.at_op(","):
                self.advance()
                args.append(self.parse_expr())
        self.expect_op(")")
        return Func(name=name, args=tuple(args), distinct=distinct)

    def parse_case(self):
        self.expect_kw("case")
        operand = None
        if not self.at_kw("when"):
            operand = self.parse_expr()
        whens = []
        while self.take_kw("when"):
            cond = self.parse_expr()
            self.expect_kw("then")
            whens.append((cond, self.parse_expr()))
        if not whens:
            self.fail("CASE requires at least one WHEN")
        else_ = self.parse_expr() if self.take_kw("else") else None
        self.expect_kw("end")
        return Case(operand, tuple(whens), else_)


def _canon_cmp(op: str) -> str:
    return _CANON_OP.get(op, op)


def parse(sql: str) -> Query:
    """Parse one SELECT statement; trailing semicolon allowed.

    Raises ParseError or MultipleStatements.
    """
    toks = tokenize(sql)
    if toks[0].kind == EOF:
        raise ParseError(0, "empty statement")
    p = _Parser(toks)
    query = p.parse_query()
    if p.at_op(";"):
        p.advance()
        if p.cur.kind != EOF:
            raise MultipleStatements("more than one statement in input")
    if p.cur.kind != EOF:
        p.fail("trailing tokens after statement")
    return query


# --- rendering ---------------------------------------------------------------

_BARE_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

# binding strength; higher binds tighter
_PREC = {"or": 1, "and": 2, "not": 3, "cmp": 4, "add": 5, "mul": 6, "neg": 7}
_OP_PREC = {"=": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
            "+": 5, "-": 5, "||": 5, "*": 6, "/": 6, "%": 6}


def render_name(name: str) -> str:
    if _BARE_NAME.match(name) and name.lower() not in _KEYWORDS:
        return name
    return '"' + name.replace('"', '""') + '"'


def _prec(e) -> int:
    if isinstance(e, Conn):
        return _PREC[e.op]
    if isinstance(e, Unary):
        return _PREC["not"] if e.op == "not" else _PREC["neg"]
    if isinstance(e, Binary):
        return _OP_PREC[e.op]
    if isinstance(e, (Between, InList, InQuery, Like, IsNull)):
        return _PREC["cmp"]
    return 9


def render_expr(e, parent_prec: int = 0) -> str:
    mine = _prec(e)
    text = _render_expr_inner(e)
    if mine < parent_prec:
        return f"({text})"
    return text


def _render_expr_inner(e) -> str:
    if isinstance(e, Lit):
        if e.kind == "string":
            return "'" + e.value.replace("'", "''") + "'"
        return e.value
    if isinstance(e, Col):
        if e.table:
            return f"{render_name(e.table)}.{render_name(e.name)}"
        return render_name(e.name)
    if isinstance(e, Star):
        return f"{render_name(e.table)}.*" if e.table else "*"
    if isinstance(e, Func):
        inner = ", ".join(render_expr(a) for a in e.args)
        if e.distinct:
            inner = "distinct " + inner
        return f"{e.name}({inner})"
    if isinstance(e, Unary):
        mine = _prec(e)
        if e.op == "not":
            return "not " + render_expr(e.operand, mine)
        return e.op + render_expr(e.operand, mine + 1)
    if isinstance(e, Binary):
        mine = _prec(e)
        return (render_expr(e.left, mine) + " " + e.op + " "
                + render_expr(e.right, mine + 1))
    if isinstance(e, Conn):
        mine = _prec(e)
        return f" {e.op} ".join(render_expr(t, mine + 1) for t in e.terms)
    if isinstance(e, Between):
        kw = "not between" if e.negated else "between"
        return (render_expr(e.expr, _PREC["cmp"] + 1) + f" {kw} "
                + render_expr(e.low, _PREC["add"]) + " and "
                + render_expr(e.high, _PREC["add"]))
    if isinstance(e, InList):
        kw = "not in" if e.negated else "in"
        inner = ", ".join(render_expr(x) for x in e.items)
        return render_expr(e.expr, _PREC["cmp"] + 1) + f" {kw} ({inner})"
    if isinstance(e, InQuery):
        kw = "not in" if e.negated else "in"
        return render_expr(e.expr, _PREC["cmp"] + 1) + f" {kw} ({render_query(e.query)})"
    if isinstance(e, Like):
        kw = f"not {e.op}" if e.negated else e.op
        text = (render_expr(e.expr, _PREC["cmp"] + 1) + f" {kw} "
                + render_expr(e.pattern, _PREC["cmp"] + 1))
        if e.escape is not None:
            text += " escape " + render_expr(e.escape, _PREC["cmp"] + 1)
        return text
    if isinstance(e, IsNull):
        kw = "is not null" if e.negated else "is null"
        return render_expr(e.expr, _PREC["cmp"] + 1) + f" {kw}"
    if isinstance(e, Exists):
        return f"exists ({render_query(e.query)})"
    if isinstance(e, SubqueryExpr):
        return f"({render_query(e.query)})"
    if isinstance(e, Case):
        parts = ["case"]
        if e.operand is not None:
            parts.append(render_expr(e.operand))
        for cond, result in e.whens:
            parts.append(f"when {render_expr(cond)} then {render_expr(result)}")
        if e.else_ is not None:
            parts.append(f"else {render_expr(e.else_)}")
        parts.append("end")
        return " ".join(parts)
    if isinstance(e, Cast):
        return f"cast({render_expr(e.expr)} as {e.type_name})"
    raise TypeError(f"cannot render {type(e).__name__}")


def _render_source(src) -> str:
    if isinstance(src, TableSource):
        text = render_name(src.name)
    else:
        text = f"({render_query(src.query)})"
    if src.alias:
        text += f" as {render_name(src.alias)}"
    return text


def render_core(core: SelectCore) -> str:
    parts = ["select"]
    if core.distinct:
        parts.append("distinct")
    cols = []
    for item in core.items:
        text = render_expr(item.expr)
        if item.alias:
            text += f" as {render_name(item.alias)}"
        cols.append(text)
    parts.append(", ".join(cols))
    if core.from_items:
        segs = [_render_source(core.from_items[0].source)]
        for fi in core.from_items[1:]:
            if fi.join == ",":
                segs.append(", " + _render_source(fi.source))
                continue
            join_kw = "join" if fi.join == "inner" else f"{fi.join} join"
            seg = f" {join_kw} {_render_source(fi.source)}"
            if fi.on is not None:
                seg += f" on {render_expr(fi.on)}"
            elif fi.using:
                seg += " using (" + ", ".join(render_name(u) for u in fi.using) + ")"
            segs.append(seg)
        parts.append("from " + "".join(segs))
    if core.where is not None:
        parts.append("where " + render_expr(core.where))
    if core.group_by:
        parts.append("group by " + ", ".join(render_expr(g) for g in core.group_by))
    if core.having is not None:
        parts.append("having " + render_expr(core.having))
    return " ".join(parts)


def render_query(q: Query) -> str:
    parts = [render_core(q.arms[0][1])]
    for op, core in q.arms[1:]:
        parts.append(op)
        parts.append(render_core(core))
    if q.order_by:
        terms = ", ".join(f"{render_expr(e)} {d}" for e, d in q.order_by)
        parts.append("order by " + terms)
    if q.limit is not None:
        parts.append("limit " + render_expr(q.limit))
        if q.offset is not None:
            parts.append("offset " + render_expr(q.offset))
    return " ".join(parts)
