"""Per-turn orchestration of the four answering agents.

Pipeline per turn: schema selection (only past a size threshold), question
type detection, decomposition into sub-questions, and an execute-inspect
-correct refinement loop. Ambiguous questions fan out into one candidate SQL
per rewritten interpretation; unanswerable/improper turns return the
detector's direct reply. Each stage can be disabled for ablation runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from ..corpus import (
    DatabaseSchema,
    Dataset,
    QuestionType,
    Table,
    db_path_for,
    introspect_schema,
    render_schema,
)
from ..executor import ExecLimits, ExecOutcome, execute
from ..llmio import BackendError, ChatMessage, ChatRequest, complete

logger = logging.getLogger(__name__)

ABLATABLE = ("selector", "detector", "decomposer", "refiner")


class UnparseableDetection(Exception):
    pass


class EmptyDecomposition(Exception):
    pass


@dataclass(frozen=True)
class AgentConfig:
    schema_table_threshold: int = 10
    schema_column_threshold: Optional[int] = None  # alternative activation unit
    max_refine_retries: int = 3
    max_rewrites: int = 3
    ablation: frozenset = frozenset()
    preview_rows: int = 5
    max_tokens: int = 1024

    def __post_init__(self):
        if self.schema_table_threshold < 1 or self.max_rewrites < 1:
            raise ValueError("thresholds must be >= 1")
        if self.max_refine_retries < 0:
            raise ValueError("max_refine_retries must be >= 0")
        unknown = set(self.ablation) - set(ABLATABLE)
        if unknown:
            raise ValueError(f"unknown ablation components: {sorted(unknown)}")

    def disabled(self, component: str) -> bool:
        return component in self.ablation


@dataclass(frozen=True)
class Detection:
    detected_type: QuestionType
    rewrites: tuple[str, ...] = ()          # ambiguous only
    direct_response: Optional[str] = None   # unanswerable/improper only


@dataclass(frozen=True)
class SubStep:
    sub_question: str
    sub_sql: str


@dataclass(frozen=True)
class TurnOutcome:
    detected_type: QuestionType
    candidate_sqls: tuple[str, ...]
    response: str
    trace: tuple[dict, ...]
    rewrites: tuple[str, ...] = ()  # aligned 1:1 with candidate_sqls when ambiguous


@dataclass
class Session:
    session_id: str
    db_id: str
    db_path: Path
    schema: DatabaseSchema
    config: AgentConfig
    backend: object
    limits: ExecLimits = ExecLimits()
    history: list = field(default_factory=list)  # of (question, TurnOutcome)


def new_session(session_id: str, db_id: str, db_root: str | Path,
                config: AgentConfig, backend,
                limits: ExecLimits = ExecLimits()) -> Session:
    db_path = db_path_for(db_root, db_id)
    return Session(session_id=session_id, db_id=db_id, db_path=db_path,
                   schema=introspect_schema(db_path), config=config,
                   backend=backend, limits=limits)


# ---------------------------------------------------------------------------
# prompt plumbing


def _template(name: str) -> string.Template:
    text = resources.files("convsql.agents").joinpath(f"templates/{name}.txt").read_text(
        encoding="utf-8")
    return string.Template(text)


def _history_block(history: Sequence[tuple[str, str]]) -> str:
    if not history:
        return ""
    lines = "\n".join(f"User: {q}\nAssistant: {a}" for q, a in history)
    return f"Conversation so far:\n{lines}\n"

def _history_pairs(session: Session) -> list[tuple[str, str]]:
    return [(q, outcome.response) for q, outcome in session.history]


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _ask(backend, prompt: str, max_tokens: int) -> str:
    req = ChatRequest(messages=(ChatMessage("user", prompt),), max_tokens=max_tokens)
    return complete(backend, req).text


def _trace_entry(agent: str, prompt: str, output: str, retries: int = 0,
                 note: str = "") -> dict:
    entry = {"agent": agent, "input_digest": _digest(prompt),
             "output_digest": _digest(output), "retries": retries}
    if note:
        entry["note"] = note
    return entry


def _extract_json(text: str) -> Optional[dict]:
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                try:
                    obj = json.loads(text[start:i + 1])
                except json.JSONDecodeError:
                    return None
                return obj if isinstance(obj, dict) else None
    return None


_FENCE = re.compile(r"```(?:sql)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


def _extract_sql(text: str) -> str:
    m = _FENCE.search(text)
    sql = m.group(1) if m else text
    return " ".join(sql.strip().rstrip(";").split())


# ---------------------------------------------------------------------------
# the four agents


def select_schema(schema: DatabaseSchema, history, question: str,
                  cfg: AgentConfig, backend, trace: Optional[list] = None) -> DatabaseSchema:
    """Pick the schema subset relevant to the question.

    Below the size threshold the full schema passes through untouched.
    Hallucinated table/column names are dropped; an empty validated subset
    falls back to the full schema.
    """
    over_tables = len(schema.tables) > cfg.schema_table_threshold
    over_columns = (cfg.schema_column_threshold is not None
                    and schema.column_count() > cfg.schema_column_threshold)
    if not over_tables and not over_columns:
        return schema

    prompt = _template("selector").substitute(
        schema=render_schema(schema, "compact"),
        history_block=_history_block(history),
        question=question)
    reply = _ask(backend, prompt, cfg.max_tokens)

    notes = []
    picked: list[Table] = []
    obj = _extract_json(reply)
    if obj and isinstance(obj.get("tables"), list):
        by_name = {t.name.lower(): t for t in schema.tables}
        wanted: dict[str, Optional[set]] = {}
        for entry in obj["tables"]:
            if not isinstance(entry, dict) or "name" not in entry:
                continue
            name = str(entry["name"]).lower()
            if name not in by_name:
                notes.append(f"dropped unknown table {entry['name']!r}")
                continue
            cols = entry.get("columns") or []
            wanted[name] = {str(c).lower() for c in cols} if cols else None
        for t in schema.tables:           # preserve declaration order
            if t.name.lower() not in wanted:
                continue
            want = wanted[t.name.lower()]
            if want is None:
                picked.append(t)
                continue
            kept = tuple(c for c in t.columns if c.name.lower() in want)
            unknown = want - {c.name.lower() for c in t.columns}
            if unknown:
                notes.append(f"dropped unknown columns {sorted(unknown)} on {t.name}")
            picked.append(Table(t.name, kept if kept else t.columns))
    else:
        notes.append("selector reply not parseable as JSON")

    if not picked:
        notes.append("empty validated subset; falling back to the full schema")
        subset = schema
    else:
        names = {t.name for t in picked}
        cols = {(t.name, c.name) for t in picked for c in t.columns}
        fks = tuple(fk for fk in schema.foreign_keys
                    if (fk.from_table, fk.from_column) in cols
                    and (fk.to_table, fk.to_column) in cols and fk.to_table in names)
        subset = DatabaseSchema(tables=tuple(picked), foreign_keys=fks)
    if trace is not None:
        trace.append(_trace_entry("selector", prompt, reply, note="; ".join(notes)))
    return subset


_TYPE_LINE = re.compile(r"^\s*TYPE:\s*([a-z]+)", re.IGNORECASE | re.MULTILINE)
_REWRITE_LINE = re.compile(r"^\s*REWRITE:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_RESPONSE_BLOCK = re.compile(r"^\s*RESPONSE:\s*(.+)", re.IGNORECASE | re.MULTILINE | re.DOTALL)

_FALLBACK_RESPONSES = {
    QuestionType.UNANSWERABLE: "I can't answer that from the data available here.",
    QuestionType.IMPROPER: "Happy to help with questions about this database.",
}


def detect_question(subset: DatabaseSchema, history, question: str,
                    cfg: AgentConfig, backend, trace: Optional[list] = None) -> Detection:
    """Classify the question into one of the four types and pick a strategy."""
    prompt = _template("detector").substitute(
        schema=render_schema(subset, "compact"),
        history_block=_history_block(history),
        question=question,
        max_rewrites=cfg.max_rewrites)
    reply = _ask(backend, prompt, cfg.max_tokens)

    m = _TYPE_LINE.search(reply)
    if not m:
        raise UnparseableDetection(f"no TYPE line in detector reply: {reply[:120]!r}")
    try:
        detected = QuestionType.parse(m.group(1))
    except ValueError as exc:
        raise UnparseableDetection(str(exc)) from None

    rewrites = tuple(r.strip() for r in _REWRITE_LINE.findall(reply))[:cfg.max_rewrites]
    response = None
    rm = _RESPONSE_BLOCK.search(reply)
    if rm:
        response = rm.group(1).strip()

    note = ""
    if detected is QuestionType.AMBIGUOUS:
        if not rewrites:
            raise UnparseableDetection("ambiguous detection carried no rewrites")
        detection = Detection(detected, rewrites=rewrites)
    elif detected is QuestionType.ANSWERABLE:
        detection = Detection(detected)
    else:
        if not response:
            response = _FALLBACK_RESPONSES[detected]
            note = "detector reply had no RESPONSE line; used fallback text"
        detection = Detection(detected, direct_response=response)
    if trace is not None:
        trace.append(_trace_entry("detector", prompt, reply, note=note))
    return detection


_STEP_LINE = re.compile(r"^\s*STEP\s*\d+\s*:\s*(.*)$", re.IGNORECASE)
_SQL_LINE = re.compile(r"^\s*SQL\s*\d+\s*:\s*(.*)$", re.IGNORECASE)


def decompose(subset: DatabaseSchema, question: str, backend,
              history=(), cfg: AgentConfig = AgentConfig(),
              trace: Optional[list] = None) -> tuple[list[SubStep], str]:
    """Split a question into sub-questions with one SQL each.

    The final SQL is the last step's; a single-step decomposition is legal.
    """
    prompt = _template("decomposer").substitute(
        schema=render_schema(subset, "compact"),
        history_block=_history_block(history),
        question=question)
    reply = _ask(backend, prompt, cfg.max_tokens)

    steps: list[SubStep] = []
    current_q: Optional[str] = None
    sql_lines: list[str] = []
    collecting = False

    def _flush():
        nonlocal current_q, sql_lines, collecting
        if collecting and sql_lines:
            sql = _extract_sql("\n".join(sql_lines))
            if sql:
                steps.append(SubStep(current_q or "", sql))
        current_q, sql_lines, collecting = None, [], False

    for line in reply.splitlines():
        sm = _STEP_LINE.match(line)
        if sm:
            _flush()
            current_q = sm.group(1).strip()
            continue
        qm = _SQL_LINE.match(line)
        if qm:
            if collecting:
                _flush()
            collecting = True
            sql_lines = [qm.group(1)]
            continue
        if collecting:
            sql_lines.append(line)
    _flush()

    if not steps:
        # tolerate free-form replies that contain just a query
        sql = _extract_sql(reply)
        if sql.lower().startswith("select") or sql.lower().startswith("with"):
            steps = [SubStep(question, sql)]
    if not steps:
        raise EmptyDecomposition(f"no SQL steps in decomposer reply: {reply[:120]!r}")
    if trace is not None:
        trace.append(_trace_entry("decomposer", prompt, reply))
    return steps, steps[-1].sub_sql


def single_shot_sql(subset: DatabaseSchema, question: str, backend,
                    history=(), cfg: AgentConfig = AgentConfig(),
                    trace: Optional[list] = None) -> str:
    """Direct text-to-SQL generation; stands in when decomposition is disabled."""
    prompt = _template("single_shot").substitute(
        schema=render_schema(subset, "compact"),
        history_block=_history_block(history),
        question=question)
    reply = _ask(backend, prompt, cfg.max_tokens)
    sql = _extract_sql(reply)
    if not sql:
        raise EmptyDecomposition("single-shot generation returned no SQL")
    if trace is not None:
        trace.append(_trace_entry("generator", prompt, reply))
    return sql


def refine(db_path: str | Path, sql: str, subset: DatabaseSchema, backend,
           cfg: AgentConfig, limits: ExecLimits = ExecLimits(),
           trace: Optional[list] = None) -> tuple[str, int, bool]:
    """Execute-inspect-correct loop: repair failing SQL from error feedback.

    Returns (final_sql, refinement attempts used, final executability).
    """
    outcome = execute(db_path, sql, limits)
    attempts = 0
    while not outcome.ok and attempts < cfg.max_refine_retries:
        prompt = _template("refiner").substitute(
            schema=render_schema(subset, "compact"),
            sql=sql,
            kind=outcome.error_kind,
            message=outcome.error_message)
        try:
            reply = _ask(backend, prompt, cfg.max_tokens)
        except BackendError as exc:
            logger.warning("refiner backend failure: %s", exc)
            if trace is not None:
                trace.append({"agent": "refiner", "input_digest": _digest(prompt),
                              "output_digest": "", "retries": attempts,
                              "note": f"backend error: {exc}"})
            return sql, attempts, outcome.ok
        attempts += 1
        candidate = _extract_sql(reply)
        if candidate:
            sql = candidate
        outcome = execute(db_path, sql, limits)
        if trace is not None:
            trace.append(_trace_entry("refiner", prompt, reply, retries=attempts))
    return sql, attempts, outcome.ok


# ---------------------------------------------------------------------------
# turn orchestration


def _preview(outcome: ExecOutcome, max_rows: int) -> str:
    if not outcome.ok:
        return f"execution failed ({outcome.error_kind})"
    rows = outcome.table.rows
    if not rows:
        return "no rows"
    shown = ["(" + ", ".join(repr(c) for c in row) + ")" for row in rows[:max_rows]]
    suffix = ", ..." if len(rows) > max_rows else ""
    return f"{len(rows)} row(s): " + ", ".join(shown) + suffix


def _generate_sql(session: Session, question: str, subset: DatabaseSchema,
                  trace: list) -> str:
    cfg = session.config
    history = _history_pairs(session)
    if cfg.disabled("decomposer"):
        sql = single_shot_sql(subset, question, session.backend,
                              history=history, cfg=cfg, trace=trace)
    else:
        _, sql = decompose(subset, question, session.backend,
                           history=history, cfg=cfg, trace=trace)
    if cfg.disabled("refiner"):
        trace.append({"agent": "refiner", "input_digest": "", "output_digest": "",
                      "retries": 0, "note": "disabled by ablation"})
        return sql
    sql, _, _ = refine(session.db_path, sql, subset, session.backend, cfg,
                       limits=session.limits, trace=trace)
    return sql


_APOLOGY = ("Sorry - something went wrong while handling this question. "
            "Please try rephrasing it.")


def run_turn(session: Session, question: str) -> TurnOutcome:
    """Run the full pipeline for one user turn and append it to the history.

    Never raises on agent failures: a turn-level failure produces an apology
    outcome with the error recorded in its trace.
    """
    cfg = session.config
    trace: list[dict] = []
    history = _history_pairs(session)
    try:
        if cfg.disabled("selector"):
            subset = session.schema
            trace.append({"agent": "selector", "input_digest": "", "output_digest": "",
                          "retries": 0, "note": "disabled by ablation"})
        else:
            subset = select_schema(session.schema, history, question,
                                   cfg, session.backend, trace=trace)

        if cfg.disabled("detector"):
            detection = Detection(QuestionType.ANSWERABLE)
            trace.append({"agent": "detector", "input_digest": "", "output_digest": "",
                          "retries": 0, "note": "disabled by ablation; assuming answerable"})
        else:
            try:
                detection = detect_question(subset, history, question,
                                            cfg, session.backend, trace=trace)
            except (UnparseableDetection, BackendError) as exc:
                detection = Detection(QuestionType.ANSWERABLE)
                trace.append({"agent": "detector", "input_digest": "",
                              "output_digest": "", "retries": 0,
                              "note": f"degraded to answerable: {exc}"})

        if detection.detected_type is QuestionType.ANSWERABLE:
            sql = _generate_sql(session, question, subset, trace)
            preview = _preview(execute(session.db_path, sql, session.limits),
                               cfg.preview_rows)
            outcome = TurnOutcome(
                detected_type=QuestionType.ANSWERABLE,
                candidate_sqls=(sql,),
                response=f"Here is what I found. SQL: {sql} -> {preview}",
                trace=tuple(trace))
        elif detection.detected_type is QuestionType.AMBIGUOUS:
            candidates = []
            lines = ["This question can be read in more than one way; "
                     "here is each interpretation."]
            for i, rewrite in enumerate(detection.rewrites, start=1):
                sql = _generate_sql(session, rewrite, subset, trace)
                candidates.append(sql)
                preview = _preview(execute(session.db_path, sql, session.limits),
                                   cfg.preview_rows)
                lines.append(f"Interpretation {i}: {rewrite} -> {sql} -> {preview}")
            lines.append("Reply with the interpretation you meant, or rephrase "
                         "your question.")
            outcome = TurnOutcome(
                detected_type=QuestionType.AMBIGUOUS,
                candidate_sqls=tuple(candidates),
                response="\n".join(lines),
                trace=tuple(trace),
                rewrites=detection.rewrites)
        else:
            outcome = TurnOutcome(
                detected_type=detection.detected_type,
                candidate_sqls=(),
                response=detection.direct_response or "",
                trace=tuple(trace))
    except Exception as exc:  # turn-level failures must not crash the session
        logger.exception("turn failed for session %s", session.session_id)
        trace.append({"agent": "pipeline", "input_digest": _digest(question),
                      "output_digest": "", "retries": 0, "note": f"error: {exc}"})
        outcome = TurnOutcome(
            detected_type=QuestionType.IMPROPER,
            candidate_sqls=(),
            response=_APOLOGY,
            trace=tuple(trace))
    session.history.append((question, outcome))
    return outcome


# ---------------------------------------------------------------------------
# benchmark driver


def run_benchmark(dataset: Dataset, db_root: str | Path, backend,
                  config: AgentConfig = AgentConfig(),
                  limits: ExecLimits = ExecLimits(),
                  jobs: int = 1) -> tuple[list[dict], list[dict]]:
    """Answer every dialogue turn with the pipeline.

    Dialogues run independently (parallel up to ``jobs``); turns within one
    dialogue stay strictly sequential. Returns (prediction records, trace
    records) in dataset order.
    """

    def _run_dialogue(dialogue):
        session = new_session(f"bench-{dialogue.dialogue_id}", dialogue.db_id,
                              db_root, config, backend, limits=limits)
        preds, traces = [], []
        for turn in dialogue.turns:
            outcome = run_turn(session, turn.question)
            preds.append({
                "dialogue_id": dialogue.dialogue_id,
                "turn_index": turn.turn_index,
                "pred_type": outcome.detected_type.value,
                "pred_sqls": list(outcome.candidate_sqls),
                "response": outcome.response,
            })
            traces.append({
                "dialogue_id": dialogue.dialogue_id,
                "turn_index": turn.turn_index,
                "trace": list(outcome.trace),
            })
        return preds, traces

    if jobs > 1 and len(dataset.dialogues) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_dialogue, dataset.dialogues))
    else:
        results = [_run_dialogue(d) for d in dataset.dialogues]

    predictions = [p for preds, _ in results for p in preds]
    traces = [t for _, traces in results for t in traces]
    return predictions, traces


def trace_signature(trace_records: Sequence[dict]) -> str:
    """Digest of the agent-step sequence of a run; ablations differ here."""
    seq = []
    for rec in trace_records:
        for entry in rec.get("trace", []):
            seq.append(entry.get("agent", "") + ":" + entry.get("note", ""))
    return hashlib.sha256("|".join(seq).encode("utf-8")).hexdigest()
