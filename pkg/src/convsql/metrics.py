"""Per-turn scoring and corpus aggregation.

Covers the full metric panel: the dual type/execution score (execution
correctness on answerable/ambiguous turns, type-classification correctness on
the rest), plain EX and EM rates, whole-interaction execution accuracy,
per-type precision/recall with macro-F1, judge-score averages, and the
correlation statistics used to validate the judge against human ratings.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Dataset, QuestionType, Turn, db_path_for, introspect_schema
from .executor import DEFAULT_FLOAT_TOL, ExecLimits, execution_match
from .sqlnorm import exact_match


class EmptyInput(Exception):
    pass


class UnmatchedScore(Exception):
    pass


class LengthMismatch(Exception):
    pass


class TooFewSamples(Exception):
    pass


class MalformedPrediction(Exception):
    pass


@dataclass(frozen=True)
class TurnScore:
    dialogue_id: str
    turn_index: int
    gold_type: QuestionType
    pred_type: Optional[QuestionType]   # None when the prediction record is missing
    type_correct: bool
    exec_correct: Optional[bool] = None  # present iff gold type carries SQL
    em_correct: Optional[bool] = None
    rqs: Optional[float] = None          # judge total on the 0-10 scale

    def tdex_indicator(self) -> bool:
        if self.gold_type.needs_sql:
            return bool(self.exec_correct)
        return self.type_correct


@dataclass(frozen=True)
class MetricReport:
    tdex: float
    ex: Optional[float]
    em: Optional[float]
    iex: Optional[float]
    per_type: dict                       # QuestionType -> (precision, recall)
    macro_f1: float
    mean_rqs: Optional[float]            # averaged over every judged turn
    mean_rqs_no_sql: Optional[float]     # averaged over non-answerable turns only
    counts: dict                         # QuestionType -> gold turn count
    gold_policy: str
    num_turns: int
    num_dialogues: int


@dataclass(frozen=True)
class CorrelationResult:
    pearson_r: float
    spearman_rho: float
    kendall_tau: float
    p_values: dict                       # statistic name -> p (empty if skipped)


@dataclass(frozen=True)
class PredictionRecord:
    dialogue_id: str
    turn_index: int
    pred_type: QuestionType
    pred_sqls: tuple[str, ...]
    response: str


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    """Read the JSON-lines prediction file (one record per turn)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(PredictionRecord(
                    dialogue_id=str(obj["dialogue_id"]),
                    turn_index=int(obj["turn_index"]),
                    pred_type=QuestionType.parse(obj["pred_type"]),
                    pred_sqls=tuple(str(s) for s in obj.get("pred_sqls", [])),
                    response=str(obj.get("response", "")),
                ))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise MalformedPrediction(f"{path}:{lineno}: {exc}") from None
    return records


# ---------------------------------------------------------------------------
# per-turn scoring


def score_turn(turn: Turn,
               pred_type: Optional[QuestionType],
               pred_sqls=None,
               db_path: str | Path | None = None,
               limits: ExecLimits = ExecLimits(),
               schema=None,
               gold_policy: str = "any",
               float_tol: float = DEFAULT_FLOAT_TOL,
               rqs: Optional[float] = None,
               dialogue_id: str = "") -> TurnScore:
    """Fill the type flag always and the execution/EM flags on SQL-bearing golds.

    ``pred_sqls`` may be a single string, a sequence (one per interpretation),
    or None. Under the ``first`` gold policy only the first prediction and the
    first gold interpretation are compared; under ``any``, any pair may match.
    """
    if isinstance(pred_sqls, str):
        pred_sqls = [pred_sqls]
    preds = [s for s in (pred_sqls or []) if s.strip()]
    type_correct = pred_type is not None and pred_type == turn.question_type

    exec_correct = em_correct = None
    if turn.question_type.needs_sql:
        if db_path is None:
            raise ValueError("db_path is required to score SQL-bearing turns")
        golds = list(turn.gold_sqls)
        if gold_policy == "first":
            golds = golds[:1]
            preds = preds[:1]
        exec_correct = any(
            execution_match(db_path, p, golds, limits=limits, float_tol=float_tol)
            for p in preds)
        em_correct = any(exact_match(p, g, schema) for p in preds for g in golds)

    return TurnScore(
        dialogue_id=dialogue_id,
        turn_index=turn.turn_index,
        gold_type=turn.question_type,
        pred_type=pred_type,
        type_correct=type_correct,
        exec_correct=exec_correct,
        em_correct=em_correct,
        rqs=rqs,
    )


def tdex(scores: Sequence[TurnScore]) -> float:
    """Mean over turns: execution flag on SQL-bearing golds, type flag otherwise."""
    if not scores:
        raise EmptyInput("tdex over an empty score list")
    return sum(1 for s in scores if s.tdex_indicator()) / len(scores)


def type_prf(scores: Sequence[TurnScore]):
    """One-vs-rest precision/recall per question type plus macro-F1.

    Types absent from both gold and predictions contribute F1=0 and still
    enter the macro average.
    """
    if not scores:
        raise EmptyInput("type_prf over an empty score list")
    types = list(QuestionType)
    tp = {t: 0 for t in types}
    fp = {t: 0 for t in types}
    fn = {t: 0 for t in types}
    for s in scores:
        if s.pred_type == s.gold_type:
            tp[s.gold_type] += 1
        else:
            fn[s.gold_type] += 1
            if s.pred_type is not None:
                fp[s.pred_type] += 1
    per_type = {}
    f1s = []
    for t in types:
        p = tp[t] / (tp[t] + fp[t]) if tp[t] + fp[t] else 0.0
        r = tp[t] / (tp[t] + fn[t]) if tp[t] + fn[t] else 0.0
        per_type[t] = (p, r)
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
    return per_type, sum(f1s) / len(f1s)


def aggregate(scores: Sequence[TurnScore], dataset: Dataset,
              gold_policy: str = "any") -> MetricReport:
    """Fold per-turn scores into the corpus-level report.

    A dialogue enters the interaction-accuracy numerator only when every one
    of its execution flags is true; dialogues without SQL-bearing turns are
    left out of that denominator entirely.
    """
    turn_index = {}
    for d in dataset.dialogues:
        for t in d.turns:
            turn_index[(d.dialogue_id, t.turn_index)] = t
    for s in scores:
        if (s.dialogue_id, s.turn_index) not in turn_index:
            raise UnmatchedScore(
                f"score for {s.dialogue_id}[turn {s.turn_index}] has no dataset turn")

    overall_tdex = tdex(list(scores))
    exec_flags = [s.exec_correct for s in scores if s.exec_correct is not None]
    em_flags = [s.em_correct for s in scores if s.em_correct is not None]
    ex = sum(exec_flags) / len(exec_flags) if exec_flags else None
    em = sum(em_flags) / len(em_flags) if em_flags else None

    by_dialogue: dict[str, list[bool]] = {}
    for s in scores:
        if s.exec_correct is not None:
            by_dialogue.setdefault(s.dialogue_id, []).append(s.exec_correct)
    iex = (sum(1 for flags in by_dialogue.values() if all(flags)) / len(by_dialogue)
           if by_dialogue else None)

    per_type, macro_f1 = type_prf(scores)

    judged = [s.rqs for s in scores if s.rqs is not None]
    judged_no_sql = [s.rqs for s in scores
                     if s.rqs is not None and s.gold_type is not QuestionType.ANSWERABLE]
    mean_rqs = sum(judged) / len(judged) if judged else None
    mean_rqs_no_sql = (sum(judged_no_sql) / len(judged_no_sql)
                       if judged_no_sql else None)

    counts = {t: 0 for t in QuestionType}
    for s in scores:
        counts[s.gold_type] += 1

    return MetricReport(
        tdex=overall_tdex, ex=ex, em=em, iex=iex,
        per_type=per_type, macro_f1=macro_f1,
        mean_rqs=mean_rqs, mean_rqs_no_sql=mean_rqs_no_sql,
        counts=counts, gold_policy=gold_policy,
        num_turns=len(scores), num_dialogues=len({s.dialogue_id for s in scores}),
    )


# ---------------------------------------------------------------------------
# whole-run evaluation


def evaluate_run(dataset: Dataset,
                 predictions: Sequence[PredictionRecord],
                 db_root: str | Path,
                 limits: ExecLimits = ExecLimits(),
                 gold_policy: str = "any",
                 float_tol: float = DEFAULT_FLOAT_TOL,
                 rqs_by_turn: Optional[dict] = None,
                 jobs: int = 1):
    """Score every dataset turn against the prediction records.

    Missing prediction records score as misses (wrong type, failed execution).
    Returns (scores in dataset order, MetricReport).
    """
    pred_index = {(p.dialogue_id, p.turn_index): p for p in predictions}
    rqs_by_turn = rqs_by_turn or {}
    schema_cache: dict[str, object] = {}
    cache_lock = threading.Lock()

    def _schema_for(db_id: str, db_path):
        with cache_lock:
            if db_id not in schema_cache:
                schema_cache[db_id] = introspect_schema(db_path)
            return schema_cache[db_id]

    def _score_dialogue(dialogue):
        db_path = db_path_for(db_root, dialogue.db_id)
        needs_db = any(t.question_type.needs_sql for t in dialogue.turns)
        schema = _schema_for(dialogue.db_id, db_path) if needs_db else None
        out = []
        for turn in dialogue.turns:
            pred = pred_index.get((dialogue.dialogue_id, turn.turn_index))
            rqs = rqs_by_turn.get((dialogue.dialogue_id, turn.turn_index))
            out.append(score_turn(
                turn,
                pred.pred_type if pred else None,
                pred.pred_sqls if pred else None,
                db_path=db_path if needs_db else None,
                limits=limits,
                schema=schema,
                gold_policy=gold_policy,
                float_tol=float_tol,
                rqs=rqs,
                dialogue_id=dialogue.dialogue_id,
            ))
        return out

    if jobs > 1 and len(dataset.dialogues) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_dialogue = list(pool.map(_score_dialogue, dataset.dialogues))
    else:
        per_dialogue = [_score_dialogue(d) for d in dataset.dialogues]

    scores = [s for chunk in per_dialogue for s in chunk]
    return scores, aggregate(scores, dataset, gold_policy=gold_policy)


# ---------------------------------------------------------------------------
# report rendering


def _pct(x: Optional[float]) -> str:
    return "-" if x is None else f"{x * 100:.1f}"


def _rqs_fmt(x: Optional[float]) -> str:
    return "-" if x is None else f"{x:.2f}"


_TYPE_LABELS = {
    QuestionType.ANSWERABLE: "Answerable",
    QuestionType.UNANSWERABLE: "Unanswerable",
    QuestionType.AMBIGUOUS: "Ambiguous",
    QuestionType.IMPROPER: "Improper",
}


def report_to_dict(report: MetricReport) -> dict:
    return {
        "gold_policy": report.gold_policy,
        "num_turns": report.num_turns,
        "num_dialogues": report.num_dialogues,
        "tdex": _pct(report.tdex),
        "iex": _pct(report.iex),
        "ex": _pct(report.ex),
        "em": _pct(report.em),
        "macro_f1": _pct(report.macro_f1),
        "rqs": _rqs_fmt(report.mean_rqs),
        "rqs_no_sql": _rqs_fmt(report.mean_rqs_no_sql),
        "per_type": {
            _TYPE_LABELS[t]: {
                "precision": _pct(p),
                "recall": _pct(r),
                "count": report.counts[t],
            }
            for t, (p, r) in report.per_type.items()
        },
    }


def format_report(report: MetricReport) -> str:
    """Aligned text table; percentages to one decimal, judge scores to two."""
    lines = [
        f"turns: {report.num_turns}   dialogues: {report.num_dialogues}   "
        f"gold policy: {report.gold_policy}",
        "",
        f"{'metric':<12}{'value':>8}",
        f"{'TDEX':<12}{_pct(report.tdex):>8}",
        f"{'IEX':<12}{_pct(report.iex):>8}",
        f"{'EX':<12}{_pct(report.ex):>8}",
        f"{'EM':<12}{_pct(report.em):>8}",
        f"{'Macro-F1':<12}{_pct(report.macro_f1):>8}",
        f"{'RQS':<12}{_rqs_fmt(report.mean_rqs):>8}",
        f"{'RQS(noSQL)':<12}{_rqs_fmt(report.mean_rqs_no_sql):>8}",
        "",
        f"{'type':<14}{'prec':>8}{'rec':>8}{'count':>8}",
    ]
    for t, (p, r) in report.per_type.items():
        lines.append(
            f"{_TYPE_LABELS[t]:<14}{_pct(p):>8}{_pct(r):>8}{report.counts[t]:>8}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# correlation statistics (judge validation)


def _rankdata(values: np.ndarray) -> np.ndarray:
    """Fractional ranks, ties averaged."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=float)
    ranks[order] = np.arange(1, len(values) + 1, dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0:
        return 0.0
    return float((xc * yc).sum() / denom)


def _kendall_tau_b(x: np.ndarray, y: np.ndarray) -> float:
    n = len(x)
    iu, ju = np.triu_indices(n, k=1)
    dx = np.sign(x[iu] - x[ju])
    dy = np.sign(y[iu] - y[ju])
    concordance = float((dx * dy).sum())
    n0 = n * (n - 1) / 2.0
    tx = float((dx == 0).sum())
    ty = float((dy == 0).sum())
    denom = np.sqrt((n0 - tx) * (n0 - ty))
    if denom == 0:
        return 0.0
    return concordance / denom


def correlations(human: Sequence[float], model: Sequence[float],
                 permutations: int = 10_000, seed: int = 0) -> CorrelationResult:
    """Pearson, Spearman (Pearson on averaged ranks), and Kendall tau-b.

    Two-sided p-values come from a seeded permutation test; pass
    ``permutations=0`` to skip them.
    """
    if len(human) != len(model):
        raise LengthMismatch(f"{len(human)} human vs {len(model)} model scores")
    if len(human) < 3:
        raise TooFewSamples("need at least 3 paired scores")
    x = np.asarray(human, dtype=float)
    y = np.asarray(model, dtype=float)

    pearson_r = _pearson(x, y)
    spearman_rho = _pearson(_rankdata(x), _rankdata(y))
    kendall_tau = _kendall_tau_b(x, y)

    p_values: dict[str, float] = {}
    if permutations > 0:
        rng = np.random.default_rng(seed)
        rx = _rankdata(x)
        counts = {"pearson": 0, "spearman": 0, "kendall": 0}
        for _ in range(permutations):
            perm = rng.permutation(y)
            if abs(_pearson(x, perm)) >= abs(pearson_r) - 1e-12:
                counts["pearson"] += 1
            if abs(_pearson(rx, _rankdata(perm))) >= abs(spearman_rho) - 1e-12:
                counts["spearman"] += 1
            if abs(_kendall_tau_b(x, perm)) >= abs(kendall_tau) - 1e-12:
                counts["kendall"] += 1
        p_values = {k: (v + 1) / (permutations + 1) for k, v in counts.items()}

    return CorrelationResult(
        pearson_r=pearson_r,
        spearman_rho=spearman_rho,
        kendall_tau=kendall_tau,
        p_values=p_values,
    )
