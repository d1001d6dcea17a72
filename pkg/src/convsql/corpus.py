"""Data model, file loaders, and schema introspection for dialogue corpora.

A corpus file is a single UTF-8 JSON document holding multi-turn dialogues;
each dialogue is bound to a SQLite database addressed as
``<db_root>/<db_id>/<db_id>.sqlite``.
"""

from __future__ import annotations

import json
import sqlite3
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

VALID_SPLITS = ("train", "test", "fixture")


class CorpusError(Exception):
    """Base class for corpus loading/validation failures."""


class FileMissing(CorpusError):
    pass


class MalformedContainer(CorpusError):
    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")


class InvariantViolation(CorpusError):
    def __init__(self, dialogue_id: str, turn_index: Optional[int], rule: str):
        self.dialogue_id = dialogue_id
        self.turn_index = turn_index
        self.rule = rule
        where = dialogue_id if turn_index is None else f"{dialogue_id}[turn {turn_index}]"
        super().__init__(f"{where}: {rule}")


class NotADatabase(CorpusError):
    pass


class QuestionType(Enum):
    ANSWERABLE = "answerable"
    UNANSWERABLE = "unanswerable"
    AMBIGUOUS = "ambiguous"
    IMPROPER = "improper"

    @classmethod
    def parse(cls, label: str) -> "QuestionType":
        """Parse a type label; only the four known labels are accepted."""
        try:
            return cls(str(label).strip().lower())
        except ValueError:
            raise ValueError(f"unknown question type: {label!r}") from None

    @property
    def needs_sql(self) -> bool:
        """True for the types whose turns carry gold SQL."""
        return self in (QuestionType.ANSWERABLE, QuestionType.AMBIGUOUS)

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Turn:
    turn_index: int  # 1-based, contiguous within a dialogue
    question: str
    question_type: QuestionType
    gold_sqls: tuple[str, ...]  # one per interpretation; >1 only for ambiguous
    gold_response: str


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    db_id: str
    turns: tuple[Turn, ...]


@dataclass(frozen=True)
class Dataset:
    split: str
    dialogues: tuple[Dialogue, ...]

    def turn_count(self) -> int:
        return sum(len(d.turns) for d in self.dialogues)

    def get(self, dialogue_id: str) -> Optional[Dialogue]:
        for d in self.dialogues:
            if d.dialogue_id == dialogue_id:
                return d
        return None


@dataclass(frozen=True)
class Column:
    name: str
    declared_type: str
    is_primary_key: bool


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]

    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)


@dataclass(frozen=True)
class ForeignKey:
    from_table: str
    from_column: str
    to_table: str
    to_column: str


@dataclass(frozen=True)
class DatabaseSchema:
    tables: tuple[Table, ...]
    foreign_keys: tuple[ForeignKey, ...] = ()

    def table(self, name: str) -> Optional[Table]:
        low = name.lower()
        for t in self.tables:
            if t.name.lower() == low:
                return t
        return None

    def table_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tables)

    def column_count(self) -> int:
        return sum(len(t.columns) for t in self.tables)


def db_path_for(db_root: str | Path, db_id: str) -> Path:
    """Resolve a db_id to its database file under the configured root."""
    return Path(db_root) / db_id / f"{db_id}.sqlite"


# ---------------------------------------------------------------------------
# Dialogue container loading / saving


def validate_turn(dialogue_id: str, turn: Turn) -> None:
    """Check the SQL-presence rules tied to the turn's question type."""
    if turn.question_type.needs_sql:
        if not turn.gold_sqls:
            raise InvariantViolation(
                dialogue_id, turn.turn_index,
                f"{turn.question_type} turn must carry at least one gold SQL")
        if turn.question_type is QuestionType.ANSWERABLE and len(turn.gold_sqls) != 1:
            raise InvariantViolation(
                dialogue_id, turn.turn_index,
                "answerable turn must carry exactly one gold SQL")
    elif turn.gold_sqls:
        raise InvariantViolation(
            dialogue_id, turn.turn_index,
            f"{turn.question_type} turn must not carry gold SQL")


def validate_dialogue(dialogue: Dialogue) -> None:
    """Check every turn-level and dialogue-level invariant; raise on the first failure."""
    if not dialogue.turns:
        raise InvariantViolation(dialogue.dialogue_id, None, "dialogue has no turns")
    for pos, turn in enumerate(dialogue.turns, start=1):
        if turn.turn_index != pos:
            raise InvariantViolation(
                dialogue.dialogue_id, turn.turn_index,
                f"turn_index must be contiguous from 1 (expected {pos})")
        validate_turn(dialogue.dialogue_id, turn)


def _turn_from_json(dialogue_id: str, obj: dict, pos: int) -> Turn:
    loc = f"dialogue {dialogue_id!r} turn #{pos}"
    if not isinstance(obj, dict):
        raise MalformedContainer(loc, "turn must be an object")
    try:
        qtype = QuestionType.parse(obj["question_type"])
    except (KeyError, ValueError) as exc:
        raise MalformedContainer(loc, str(exc)) from None
    try:
        return Turn(
            turn_index=int(obj["turn_index"]),
            question=str(obj["question"]),
            question_type=qtype,
            gold_sqls=tuple(str(s) for s in obj.get("gold_sqls", [])),
            gold_response=str(obj.get("gold_response", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedContainer(loc, f"bad turn record: {exc}") from None


def load_dataset(path: str | Path, split: Optional[str] = None) -> Dataset:
    """Load a dialogue container file and validate every invariant.

    ``split`` overrides the file's own split tag when given. Violations are
    reported with the offending dialogue_id and turn_index.
    """
    path = Path(path)
    if not path.exists():
        raise FileMissing(f"dataset file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedContainer(str(path), f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "dialogues" not in doc:
        raise MalformedContainer(str(path), "top level must be an object with a 'dialogues' list")

    file_split = doc.get("split", "fixture")
    effective = split or file_split
    if effective not in VALID_SPLITS:
        raise MalformedContainer(str(path), f"unknown split tag: {effective!r}")

    dialogues = []
    seen_ids = set()
    raw = doc["dialogues"]
    if not isinstance(raw, list):
        raise MalformedContainer(str(path), "'dialogues' must be a list")
    for i, dobj in enumerate(raw):
        if not isinstance(dobj, dict) or "dialogue_id" not in dobj or "db_id" not in dobj:
            raise MalformedContainer(f"{path} dialogues[{i}]",
                                     "dialogue must carry dialogue_id and db_id")
        did = str(dobj["dialogue_id"])
        if did in seen_ids:
            raise InvariantViolation(did, None, "duplicate dialogue_id in dataset")
        seen_ids.add(did)
        turns = tuple(_turn_from_json(did, t, pos)
                      for pos, t in enumerate(dobj.get("turns", []), start=1))
        dialogue = Dialogue(dialogue_id=did, db_id=str(dobj["db_id"]), turns=turns)
        validate_dialogue(dialogue)
        dialogues.append(dialogue)

    return Dataset(split=effective, dialogues=tuple(dialogues))


def dataset_to_json(dataset: Dataset) -> dict:
    return {
        "split": dataset.split,
        "dialogues": [
            {
                "dialogue_id": d.dialogue_id,
                "db_id": d.db_id,
                "turns": [
                    {
                        "turn_index": t.turn_index,
                        "question": t.question,
                        "question_type": t.question_type.value,
                        "gold_sqls": list(t.gold_sqls),
                        "gold_response": t.gold_response,
                    }
                    for t in d.turns
                ],
            }
            for d in dataset.dialogues
        ],
    }


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the container format; round-trips through load_dataset."""
    Path(path).write_text(
        json.dumps(dataset_to_json(dataset), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8")


# ---------------------------------------------------------------------------
# Schema introspection and rendering


def introspect_schema(db_path: str | Path) -> DatabaseSchema:
    """Read every user table, its columns in declaration order, PK flags and FKs."""
    db_path = Path(db_path)
    if not db_path.exists():
        raise FileMissing(f"database file not found: {db_path}")
    uri = f"file:{db_path}?mode=ro"
    try:
        con = sqlite3.connect(uri, uri=True)
        try:
            names = [r[0] for r in con.execute(
                "SELECT name FROM sqlite_master WHERE type='table' "
                "AND name NOT LIKE 'sqlite_%' ORDER BY rowid")]
            tables = []
            fks = []
            for name in names:
                cols = []
                for _, cname, ctype, _notnull, _dflt, pk in con.execute(
                        f'PRAGMA table_info("{name}")'):
                    cols.append(Column(name=cname, declared_type=ctype or "",
                                       is_primary_key=bool(pk)))
                tables.append(Table(name=name, columns=tuple(cols)))
                for row in con.execute(f'PRAGMA foreign_key_list("{name}")'):
                    # row: id, seq, table, from, to, on_update, on_delete, match
                    to_col = row[4]
                    if to_col is None:
                        # FK against the implicit PK of the target table
                        to_col = ""
                    fks.append(ForeignKey(from_table=name, from_column=row[3],
                                          to_table=row[2], to_column=to_col))
        finally:
            con.close()
    except sqlite3.DatabaseError as exc:
        raise NotADatabase(f"{db_path}: {exc}") from None

    # resolve blank FK targets to the target table's primary key, if known
    resolved = []
    by_name = {t.name: t for t in tables}
    for fk in fks:
        if not fk.to_column and fk.to_table in by_name:
            pk_cols = [c.name for c in by_name[fk.to_table].columns if c.is_primary_key]
            if len(pk_cols) == 1:
                fk = ForeignKey(fk.from_table, fk.from_column, fk.to_table, pk_cols[0])
        resolved.append(fk)
    return DatabaseSchema(tables=tuple(tables), foreign_keys=tuple(resolved))


def render_schema(schema: DatabaseSchema, style: str = "compact") -> str:
    """Serialize a schema deterministically.

    ``compact`` emits one line per table: ``table(col1, col2*, ...)`` with ``*``
    marking primary keys. ``ddl`` emits CREATE TABLE statements in table order.
    """
    if style == "compact":
        lines = []
        for t in schema.tables:
            cols = ", ".join(c.name + ("*" if c.is_primary_key else "") for c in t.columns)
            lines.append(f"{t.name}({cols})")
        return "\n".join(lines)
    if style == "ddl":
        stmts = []
        fks_by_table: dict[str, list[ForeignKey]] = {}
        for fk in schema.foreign_keys:
            fks_by_table.setdefault(fk.from_table, []).append(fk)
        for t in schema.tables:
            body = [f"  {c.name} {c.declared_type}".rstrip() for c in t.columns]
            pk = [c.name for c in t.columns if c.is_primary_key]
            if pk:
                body.append(f"  PRIMARY KEY ({', '.join(pk)})")
            for fk in fks_by_table.get(t.name, []):
                body.append(f"  FOREIGN KEY ({fk.from_column}) "
                            f"REFERENCES {fk.to_table}({fk.to_column})")
            stmts.append(f"CREATE TABLE {t.name} (\n" + ",\n".join(body) + "\n);")
        return "\n".join(stmts)
    raise ValueError(f"unknown schema render style: {style!r}")
