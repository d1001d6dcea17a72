"""LLM-assisted response quality scoring.

Each response is graded on five criteria (relevance, clarity, completeness,
accuracy, utility), 0-2 each, 10 max. The judge prompt demands written
evidence per criterion before the machine-readable score line, and the final
score averages several independent samples whose mandated evidence order
differs, which keeps the requests distinct even under greedy decoding.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Sequence

from .corpus import Turn
from .llmio import ChatMessage, ChatRequest, complete

logger = logging.getLogger(__name__)

CRITERIA = ("relevance", "clarity", "completeness", "accuracy", "utility")

DEFAULT_RUBRIC = """\
relevance: 0 = the response has nothing to do with the question; 1 = partially \
relevant but misses key details; 2 = fully relevant and squarely addresses the question.
clarity: 0 = incomprehensible; 1 = mostly clear with minor ambiguities; \
2 = very clear and easy to follow.
completeness: 0 = does not address the question at all; 1 = covers most aspects \
but lacks some details; 2 = thoroughly addresses every aspect of the question.
accuracy: 0 = contains factually wrong information; 1 = partially accurate with \
some errors; 2 = entirely accurate.
utility: 0 = does not meet the user's needs or explain the situation; 1 = somewhat \
meets the needs with partial explanation; 2 = excellently meets the needs and \
clearly explains the context or any ambiguity."""


class NoScoreLine(Exception):
    pass


class OutOfRange(Exception):
    def __init__(self, criterion: str, value: int):
        self.criterion = criterion
        self.value = value
        super().__init__(f"{criterion}={value} outside 0..2")


class AllSamplesUnparseable(Exception):
    pass


@dataclass(frozen=True)
class RqsBreakdown:
    relevance: int
    clarity: int
    completeness: int
    accuracy: int
    utility: int

    def __post_init__(self):
        for name in CRITERIA:
            v = getattr(self, name)
            if v not in (0, 1, 2):
                raise OutOfRange(name, v)

    @property
    def total(self) -> int:
        return sum(getattr(self, c) for c in CRITERIA)

    def to_dict(self) -> dict:
        out = {c: getattr(self, c) for c in CRITERIA}
        out["total"] = self.total
        return out


@dataclass(frozen=True)
class RqsMean:
    """Criterion-wise arithmetic means over the parsed samples."""
    relevance: float
    clarity: float
    completeness: float
    accuracy: float
    utility: float
    total: float

    def to_dict(self) -> dict:
        out = {c: getattr(self, c) for c in CRITERIA}
        out["total"] = self.total
        return out


@dataclass
class JudgeConfig:
    backend: object                  # BackendSpec or backend instance
    samples_k: int = 3
    rubric: str = DEFAULT_RUBRIC
    max_tokens: int = 1024

    def __post_init__(self):
        if self.samples_k < 1:
            raise ValueError("samples_k must be >= 1")


def build_judge_prompt(turn: Turn, response: str,
                       history: Sequence[tuple[str, str]] = (),
                       rubric: str = DEFAULT_RUBRIC,
                       sample_index: int = 0) -> str:
    """Deterministic grading prompt: context, question, response, rubric.

    Evidence is demanded before the score line; the mandated evidence order
    rotates with sample_index so repeated samples stay distinct requests.
    """
    order = [CRITERIA[(i + sample_index) % len(CRITERIA)] for i in range(len(CRITERIA))]
    parts = ["You are grading the quality of an assistant's reply in a "
             "database question-answering conversation."]
    if history:
        context = "\n".join(f"User: {q}\nAssistant: {a}" for q, a in history)
        parts.append("Conversation so far:\n" + context)
    parts.append("Question:\n" + turn.question)
    parts.append("Candidate response:\n" + response)
    parts.append("Scoring rubric (each criterion scored 0, 1, or 2):\n" + rubric)
    parts.append(
        "First write one short evidence sentence per criterion, citing the "
        "response, in this order: " + ", ".join(order) + ". "
        "Then output exactly one final line of the form:\n"
        "SCORES: relevance=<n> clarity=<n> completeness=<n> accuracy=<n> utility=<n>")
    return "\n\n".join(parts)


_SCORE_LINE = re.compile(
    r"SCORES:\s*relevance=(-?\d+)\s+clarity=(-?\d+)\s+completeness=(-?\d+)"
    r"\s+accuracy=(-?\d+)\s+utility=(-?\d+)", re.IGNORECASE)


def parse_judge_output(text: str) -> RqsBreakdown:
    """Extract the last SCORES line; out-of-range values are errors, not clamped."""
    matches = list(_SCORE_LINE.finditer(text))
    if not matches:
        raise NoScoreLine("no SCORES line in judge output")
    values = [int(g) for g in matches[-1].groups()]
    return RqsBreakdown(*values)


def score_response(cfg: JudgeConfig, turn: Turn, response: str,
                   history: Sequence[tuple[str, str]] = ()):
    """Average samples_k independent judge calls.

    Returns (RqsMean, per-sample breakdowns, warnings). Unparseable samples
    are dropped with a warning; every sample unparseable is an error.
    """
    samples: list[RqsBreakdown] = []
    warnings: list[str] = []
    usage_in = usage_out = 0
    for i in range(cfg.samples_k):
        prompt = build_judge_prompt(turn, response, history,
                                    rubric=cfg.rubric, sample_index=i)
        req = ChatRequest(messages=(ChatMessage("user", prompt),),
                          max_tokens=cfg.max_tokens)
        completion = complete(cfg.backend, req)
        usage_in += completion.input_tokens
        usage_out += completion.output_tokens
        try:
            samples.append(parse_judge_output(completion.text))
        except (NoScoreLine, OutOfRange) as exc:
            warnings.append(f"sample {i}: {exc}")
            logger.warning("judge sample %d unparseable: %s", i, exc)
    if not samples:
        raise AllSamplesUnparseable(
            f"all {cfg.samples_k} judge samples unparseable: {warnings}")
    mean = RqsMean(
        *(sum(getattr(s, c) for s in samples) / len(samples) for c in CRITERIA),
        total=sum(s.total for s in samples) / len(samples),
    )
    return mean, samples, warnings, (usage_in, usage_out)


def judge_run(cfg: JudgeConfig, dataset, predictions) -> tuple[list[dict], tuple[int, int]]:
    """Judge every predicted response against its dialogue context.

    History shown to the judge is the model's own conversation: the user
    questions paired with the predicted responses of earlier turns. Returns
    (records, (input_tokens, output_tokens)).
    """
    pred_index = {(p.dialogue_id, p.turn_index): p for p in predictions}
    records = []
    total_in = total_out = 0
    for dialogue in dataset.dialogues:
        history: list[tuple[str, str]] = []
        for turn in dialogue.turns:
            pred = pred_index.get((dialogue.dialogue_id, turn.turn_index))
            if pred is None:
                history.append((turn.question, ""))
                continue
            mean, samples, warnings, (tin, tout) = score_response(
                cfg, turn, pred.response, history)
            total_in += tin
            total_out += tout
            records.append({
                "dialogue_id": dialogue.dialogue_id,
                "turn_index": turn.turn_index,
                "rqs": mean.to_dict(),
                "samples": [s.to_dict() for s in samples],
                "warnings": warnings,
            })
            history.append((turn.question, pred.response))
    return records, (total_in, total_out)


def load_rqs_records(path) -> dict:
    """Map (dialogue_id, turn_index) -> mean total from a judge records file."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out[(obj["dialogue_id"], obj["turn_index"])] = float(obj["rqs"]["total"])
    return out
