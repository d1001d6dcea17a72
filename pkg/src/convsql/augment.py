"""Two-phase dialogue augmentation: sampled-goal generation, then filtering.

Phase one samples a (thematic relation, question type) goal per turn from a
seeded RNG and asks the backend to write the turn against the accumulated
history. Phase two gates each candidate mechanically (gold SQL of SQL-bearing
turns must execute) before an LLM review scores it 0-10 and may polish the
question/response text; the keep decision combines both.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from string import Template
from typing import Optional, Sequence

from .corpus import (
    DatabaseSchema,
    Dataset,
    Dialogue,
    InvariantViolation,
    QuestionType,
    Turn,
    render_schema,
    validate_turn,
)
from .executor import ExecLimits, execute
from .llmio import ChatMessage, ChatRequest, complete

logger = logging.getLogger(__name__)

# conversation-flow relation labels between consecutive turns; overridable
DEFAULT_RELATIONS = (
    "constraint refinement",
    "topic exploration",
    "participant shift",
    "answer refinement",
)


class NoValidTurns(Exception):
    pass


@dataclass
class GenConfig:
    turns_min: int = 2
    turns_max: int = 4
    type_weights: dict = field(default_factory=lambda: {
        QuestionType.ANSWERABLE: 0.5,
        QuestionType.AMBIGUOUS: 0.2,
        QuestionType.UNANSWERABLE: 0.15,
        QuestionType.IMPROPER: 0.15,
    })
    relation_pool: tuple = DEFAULT_RELATIONS
    quality_cutoff: float = 7.0
    seed: int = 0
    max_tokens: int = 1024

    def __post_init__(self):
        if self.turns_min < 1 or self.turns_max < self.turns_min:
            raise ValueError("bad turns range")
        weights = list(self.type_weights.values())
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("type weights must be >= 0 with a positive sum")
        if not 0 <= self.quality_cutoff <= 10:
            raise ValueError("quality_cutoff must be in [0, 10]")

    @staticmethod
    def from_dict(obj: dict) -> "GenConfig":
        kwargs = dict(obj)
        if "type_weights" in kwargs:
            kwargs["type_weights"] = {
                QuestionType.parse(k): float(v)
                for k, v in kwargs["type_weights"].items()}
        if "relation_pool" in kwargs:
            kwargs["relation_pool"] = tuple(kwargs["relation_pool"])
        return GenConfig(**kwargs)


@dataclass(frozen=True)
class CandidateDialogue:
    dialogue: Dialogue
    metadata: tuple  # one {"relation", "sampled_type"} dict per turn


@dataclass(frozen=True)
class QualityVerdict:
    score: float
    type_check_passed: bool
    reasons: str
    keep: bool


_GEN_PROMPT = Template("""\
You write one new turn for a multi-turn database question-answering dialogue.

Database schema:
$schema

$history_block
Write the next user question and its reference answer. The question must relate \
to the conversation as "$relation" and be of type "$qtype":
- answerable: answered by exactly one SQLite query over this schema; include it.
- ambiguous: has at least two readings; include one SQLite query per reading.
- unanswerable: cannot be answered from this schema; include no SQL.
- improper: casual conversation needing no SQL; include no SQL.

Reply with JSON only: {"question": "...", "gold_sqls": ["..."], "gold_response": "..."}""")

_RETRY_NUDGE = ("The previous reply violated the format rules for that question "
                "type. Reply again with valid JSON and the right gold_sqls shape.")

_VERIFY_PROMPT = Template("""\
You review one generated multi-turn database question-answering dialogue.

Database schema:
$schema

Dialogue (JSON):
$dialogue

Check that every turn's declared type fits its content, that SQL (when present) \
answers its question, and that responses are helpful. Score the dialogue 0-10 \
overall. You may rewrite question or response text, never SQL.

Reply with JSON only: \
{"score": <0-10>, "reasons": "...", "revisions": [{"turn_index": <n>, "question": "...", "gold_response": "..."}]}""")


def _history_block(turns: Sequence[Turn]) -> str:
    if not turns:
        return ""
    lines = []
    for t in turns:
        lines.append(f"User: {t.question}")
        lines.append(f"Assistant: {t.gold_response}")
    return "Conversation so far:\n" + "\n".join(lines) + "\n"


def _parse_json_reply(text: str) -> Optional[dict]:
    start = text.find("{")
    end = text.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        obj = json.loads(text[start:end + 1])
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None


def _turn_from_reply(obj: dict, index: int, qtype: QuestionType) -> Turn:
    turn = Turn(
        turn_index=index,
        question=str(obj.get("question", "")).strip(),
        question_type=qtype,
        gold_sqls=tuple(str(s) for s in obj.get("gold_sqls", []) if str(s).strip()),
        gold_response=str(obj.get("gold_response", "")).strip(),
    )
    if not turn.question:
        raise InvariantViolation("candidate", index, "empty question")
    validate_turn("candidate", turn)
    return turn


def generate_candidate(seed_dialogue: Dialogue, schema: DatabaseSchema,
                       cfg: GenConfig, backend,
                       rng: Optional[random.Random] = None) -> CandidateDialogue:
    """Generate one candidate dialogue with per-turn sampled goals.

    A turn that violates its type's SQL-shape rules is regenerated once with a
    corrective nudge, then dropped. Raises NoValidTurns when nothing survives.
    """
    rng = rng or random.Random(cfg.seed)
    n_turns = rng.randint(cfg.turns_min, cfg.turns_max)
    types = list(cfg.type_weights.keys())
    weights = [cfg.type_weights[t] for t in types]

    turns: list[Turn] = []
    metadata: list[dict] = []
    schema_text = render_schema(schema, "compact")
    for _ in range(n_turns):
        relation = rng.choice(list(cfg.relation_pool))
        qtype = rng.choices(types, weights=weights, k=1)[0]
        prompt = _GEN_PROMPT.substitute(
            schema=schema_text,
            history_block=_history_block(turns),
            relation=relation,
            qtype=qtype.value)
        messages = [ChatMessage("user", prompt)]
        turn = None
        for attempt in range(2):
            reply = complete(backend, ChatRequest(messages=tuple(messages),
                                                  max_tokens=cfg.max_tokens)).text
            obj = _parse_json_reply(reply)
            if obj is not None:
                try:
                    turn = _turn_from_reply(obj, len(turns) + 1, qtype)
                    break
                except InvariantViolation as exc:
                    logger.info("generated turn rejected (%s); attempt %d", exc, attempt)
            messages.extend([ChatMessage("assistant", reply),
                             ChatMessage("user", _RETRY_NUDGE)])
        if turn is None:
            continue
        turns.append(turn)
        metadata.append({"relation": relation, "sampled_type": qtype.value})

    if not turns:
        raise NoValidTurns(f"no valid turns generated for {seed_dialogue.dialogue_id}")
    dialogue = Dialogue(
        dialogue_id=f"{seed_dialogue.dialogue_id}-aug",
        db_id=seed_dialogue.db_id,
        turns=tuple(turns))
    return CandidateDialogue(dialogue=dialogue, metadata=tuple(metadata))


def verify_refine(candidate: CandidateDialogue, schema: DatabaseSchema,
                  db_path: str | Path, cfg: GenConfig, backend,
                  limits: ExecLimits = ExecLimits()) -> tuple[CandidateDialogue, QualityVerdict]:
    """Gate mechanically, then review with the backend.

    The executability gate is an oracle the review cannot override: any
    SQL-bearing turn whose gold SQL fails closes the keep decision regardless
    of the review score. The review may rewrite question/response text only.
    """
    type_check_passed = True
    failures = []
    for turn in candidate.dialogue.turns:
        if not turn.question_type.needs_sql:
            continue
        for k, sql in enumerate(turn.gold_sqls):
            outcome = execute(db_path, sql, limits)
            if not outcome.ok:
                type_check_passed = False
                failures.append(
                    f"turn {turn.turn_index} sql #{k}: {outcome.error_kind}")

    dialogue_json = json.dumps({
        "turns": [{
            "turn_index": t.turn_index,
            "question": t.question,
            "question_type": t.question_type.value,
            "gold_sqls": list(t.gold_sqls),
            "gold_response": t.gold_response,
        } for t in candidate.dialogue.turns]
    }, ensure_ascii=False, indent=1)
    prompt = _VERIFY_PROMPT.substitute(
        schema=render_schema(schema, "compact"), dialogue=dialogue_json)
    reply = complete(backend, ChatRequest(
        messages=(ChatMessage("user", prompt),), max_tokens=cfg.max_tokens)).text

    obj = _parse_json_reply(reply) or {}
    try:
        score = max(0.0, min(10.0, float(obj.get("score"))))
        reasons = str(obj.get("reasons", ""))
    except (TypeError, ValueError):
        score, reasons = 0.0, "review reply unparseable"

    revised = list(candidate.dialogue.turns)
    for rev in obj.get("revisions", []) or []:
        if not isinstance(rev, dict):
            continue
        try:
            idx = int(rev["turn_index"]) - 1
        except (KeyError, TypeError, ValueError):
            continue
        if not 0 <= idx < len(revised):
            continue
        turn = revised[idx]
        if rev.get("question"):
            turn = replace(turn, question=str(rev["question"]))
        if rev.get("gold_response"):
            turn = replace(turn, gold_response=str(rev["gold_response"]))
        revised[idx] = turn

    if failures:
        reasons = (reasons + " | " if reasons else "") + "gold SQL failures: " + \
            "; ".join(failures)
    verdict = QualityVerdict(
        score=score,
        type_check_passed=type_check_passed,
        reasons=reasons,
        keep=(score >= cfg.quality_cutoff) and type_check_passed)
    refined = CandidateDialogue(
        dialogue=replace(candidate.dialogue, turns=tuple(revised)),
        metadata=candidate.metadata)
    return refined, verdict


def augment_dataset(seed_dataset: Dataset, db_root: str | Path,
                    cfg: GenConfig, backend,
                    schemas: Optional[dict] = None,
                    limits: ExecLimits = ExecLimits()) -> tuple[Dataset, list[dict]]:
    """Run generate + verify over every seed dialogue with one seeded RNG.

    Returns the kept dialogues as a dataset plus a per-candidate log. With a
    fixed seed and a replay backend the output is bit-reproducible.
    """
    from .corpus import db_path_for, introspect_schema

    rng = random.Random(cfg.seed)
    kept: list[Dialogue] = []
    log: list[dict] = []
    schemas = schemas if schemas is not None else {}
    for dialogue in seed_dataset.dialogues:
        if dialogue.db_id not in schemas:
            schemas[dialogue.db_id] = introspect_schema(db_path_for(db_root, dialogue.db_id))
        schema = schemas[dialogue.db_id]
        try:
            candidate = generate_candidate(dialogue, schema, cfg, backend, rng=rng)
        except NoValidTurns as exc:
            log.append({"seed": dialogue.dialogue_id, "kept": False,
                        "reason": str(exc)})
            continue
        refined, verdict = verify_refine(
            candidate, schema, db_path_for(db_root, dialogue.db_id), cfg, backend,
            limits=limits)
        log.append({
            "seed": dialogue.dialogue_id,
            "kept": verdict.keep,
            "score": verdict.score,
            "type_check_passed": verdict.type_check_passed,
            "reasons": verdict.reasons,
        })
        if verdict.keep:
            kept.append(refined.dialogue)
    return Dataset(split=seed_dataset.split, dialogues=tuple(kept)), log


# ---------------------------------------------------------------------------
# pairwise annotation-quality comparison


_COMPARE_PROMPT = Template("""\
Two versions of a database question-answering dialogue are shown. Judge which \
has the better overall annotation quality: question naturalness, SQL \
correctness-plausibility, and response helpfulness.

Dialogue A:
$first

Dialogue B:
$second

Reply with exactly one line: BETTER: A | BETTER: B | BETTER: tie""")


def _dialogue_text(d: Dialogue) -> str:
    lines = []
    for t in d.turns:
        lines.append(f"[{t.question_type.value}] User: {t.question}")
        for s in t.gold_sqls:
            lines.append(f"  SQL: {s}")
        lines.append(f"  Assistant: {t.gold_response}")
    return "\n".join(lines)


def compare_datasets(original: Dataset, enhanced: Dataset, backend,
                     max_tokens: int = 256) -> dict:
    """Pairwise preference counts for the enhanced side.

    Presentation order alternates by 1-based pair id to wash out order bias:
    the enhanced dialogue goes first on odd ids, second on even ids.
    """
    wins = ties = losses = 0
    pairs = min(len(original.dialogues), len(enhanced.dialogues))
    for i in range(pairs):
        pair_id = i + 1
        orig, enh = original.dialogues[i], enhanced.dialogues[i]
        if pair_id % 2 == 1:
            first, second, enhanced_is = enh, orig, "A"
        else:
            first, second, enhanced_is = orig, enh, "B"
        prompt = _COMPARE_PROMPT.substitute(
            first=_dialogue_text(first), second=_dialogue_text(second))
        reply = complete(backend, ChatRequest(
            messages=(ChatMessage("user", prompt),), max_tokens=max_tokens)).text
        verdict = "tie"
        m = reply.upper().rfind("BETTER:")
        if m >= 0:
            tail = reply.upper()[m + len("BETTER:"):].strip()
            if tail.startswith("A"):
                verdict = "A"
            elif tail.startswith("B"):
                verdict = "B"
        if verdict == "tie":
            ties += 1
        elif verdict == enhanced_is:
            wins += 1
        else:
            losses += 1
    return {"pairs": pairs, "win": wins, "tie": ties, "loss": losses}
