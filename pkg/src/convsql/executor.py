"""Sandboxed SQL execution against SQLite files and result-table comparison.

Execution is strictly read-only (URI mode=ro plus an authorizer); runaway
queries are cut off by a wall-clock deadline checked from SQLite's progress
handler. Result tables are compared positionally, as ordered sequences when
the reference query carries a top-level ORDER BY and as multisets otherwise.
"""

from __future__ import annotations

import sqlite3
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .corpus import FileMissing
from .sqlnorm import has_outer_order_by

DEFAULT_FLOAT_TOL = 1e-6

_PROGRESS_OPS = 2000  # VM instructions between deadline checks

_READ_ACTIONS = {
    sqlite3.SQLITE_SELECT,
    sqlite3.SQLITE_READ,
    sqlite3.SQLITE_FUNCTION,
    sqlite3.SQLITE_RECURSIVE,
}


class GoldExecutionFailed(Exception):
    def __init__(self, gold_index: int, message: str):
        self.gold_index = gold_index
        super().__init__(f"gold sql #{gold_index}: {message}")


@dataclass(frozen=True)
class ExecLimits:
    timeout_ms: int = 30_000
    max_rows: int = 100_000

    def __post_init__(self):
        if self.timeout_ms <= 0 or self.max_rows <= 0:
            raise ValueError("limits must be positive")


@dataclass(frozen=True)
class ResultTable:
    column_count: int
    rows: tuple  # of row tuples; cells are None/int/float/str/bytes
    truncated: bool = False
    column_names: tuple = ()  # informational only, never compared


@dataclass(frozen=True)
class ExecOutcome:
    table: Optional[ResultTable] = None
    error_kind: Optional[str] = None   # syntax | schema | timeout | resource
    error_message: str = ""

    @property
    def ok(self) -> bool:
        return self.table is not None

    @staticmethod
    def success(table: ResultTable) -> "ExecOutcome":
        return ExecOutcome(table=table)

    @staticmethod
    def failure(kind: str, message: str) -> "ExecOutcome":
        return ExecOutcome(error_kind=kind, error_message=message)


def _classify_error(exc: BaseException, timed_out: bool) -> tuple[str, str]:
    msg = str(exc)
    low = msg.lower()
    if timed_out or "interrupted" in low:
        return "timeout", "execution exceeded the configured deadline"
    if "syntax error" in low or "incomplete input" in low or "unrecognized token" in low:
        return "syntax", msg
    if low.startswith("no such") or "ambiguous column" in low or "no such function" in low:
        return "schema", msg
    return "resource", msg


def _deny_writes(action, *args):
    if action in _READ_ACTIONS:
        return sqlite3.SQLITE_OK
    return sqlite3.SQLITE_DENY


def execute(db_path: str | Path, sql: str,
            limits: ExecLimits = ExecLimits()) -> ExecOutcome:
    """Run one read-only statement; all failures are carried in the outcome.

    Rows beyond max_rows are dropped and the table is marked truncated, which
    downstream comparison treats as a failure.
    """
    db_path = Path(db_path)
    if not db_path.exists():
        raise FileMissing(f"database file not found: {db_path}")
    deadline = time.monotonic() + limits.timeout_ms / 1000.0
    timed_out = False

    def _check_deadline():
        nonlocal timed_out
        if time.monotonic() > deadline:
            timed_out = True
            return 1
        return 0

    con = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True)
    try:
        con.set_progress_handler(_check_deadline, _PROGRESS_OPS)
        con.set_authorizer(_deny_writes)
        try:
            cur = con.execute(sql)
            rows = cur.fetchmany(limits.max_rows + 1)
        except sqlite3.Error as exc:
            kind, msg = _classify_error(exc, timed_out)
            return ExecOutcome.failure(kind, msg)
        truncated = len(rows) > limits.max_rows
        if truncated:
            rows = rows[:limits.max_rows]
        names = tuple(d[0] for d in cur.description) if cur.description else ()
        width = len(names)
        return ExecOutcome.success(ResultTable(
            column_count=width,
            rows=tuple(tuple(r) for r in rows),
            truncated=truncated,
            column_names=names,
        ))
    finally:
        con.close()


# ---------------------------------------------------------------------------
# result comparison


_TYPE_RANK = {type(None): 0, int: 1, float: 1, str: 2, bytes: 3}


def _cell_key(cell):
    rank = _TYPE_RANK.get(type(cell), 4)
    if cell is None:
        return (0, 0)
    if rank == 1:
        return (1, float(cell))
    return (rank, cell)


def _row_key(row):
    return tuple(_cell_key(c) for c in row)


def _cells_equal(a, b, float_tol: float) -> bool:
    if a is None or b is None:
        return a is None and b is None
    a_num = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_num = isinstance(b, (int, float)) and not isinstance(b, bool)
    if a_num and b_num:
        if isinstance(a, int) and isinstance(b, int):
            return a == b
        return abs(float(a) - float(b)) <= float_tol
    if type(a) is not type(b):
        return False
    return a == b


def _rows_equal(a, b, float_tol: float) -> bool:
    return len(a) == len(b) and all(_cells_equal(x, y, float_tol) for x, y in zip(a, b))


def results_equal(a: ResultTable, b: ResultTable, ordered: bool,
                  float_tol: float = DEFAULT_FLOAT_TOL) -> bool:
    """Positional table equality; truncated tables never compare equal."""
    if a.truncated or b.truncated:
        return False
    if a.column_count != b.column_count or len(a.rows) != len(b.rows):
        return False
    if ordered:
        return all(_rows_equal(x, y, float_tol) for x, y in zip(a.rows, b.rows))
    # exact fast path: Counter unifies int/float natively (hash(3) == hash(3.0))
    if Counter(a.rows) == Counter(b.rows):
        return True
    left = sorted(a.rows, key=_row_key)
    right = sorted(b.rows, key=_row_key)
    return all(_rows_equal(x, y, float_tol) for x, y in zip(left, right))


def execution_match(db_path: str | Path, pred_sql: str,
                    gold_sqls: Sequence[str],
                    limits: ExecLimits = ExecLimits(),
                    float_tol: float = DEFAULT_FLOAT_TOL) -> bool:
    """True iff the prediction executes and its results match at least one gold.

    Ordered comparison applies exactly when the matched gold carries a
    top-level ORDER BY. A failing gold raises; a failing prediction is false.
    """
    if not gold_sqls:
        raise ValueError("gold_sqls must be non-empty")
    pred = execute(db_path, pred_sql, limits)
    if not pred.ok:
        return False
    for idx, gold_sql in enumerate(gold_sqls):
        gold = execute(db_path, gold_sql, limits)
        if not gold.ok:
            raise GoldExecutionFailed(idx, f"{gold.error_kind}: {gold.error_message}")
        ordered = has_outer_order_by(gold_sql)
        if results_equal(pred.table, gold.table, ordered=ordered, float_tol=float_tol):
            return True
    return False
