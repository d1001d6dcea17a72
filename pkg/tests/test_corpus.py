import json

import pytest

from convsql.corpus import (
    Column,
    DatabaseSchema,
    FileMissing,
    ForeignKey,
    InvariantViolation,
    MalformedContainer,
    NotADatabase,
    QuestionType,
    Table,
    db_path_for,
    introspect_schema,
    load_dataset,
    render_schema,
    save_dataset,
)


def test_question_type_parse():
    assert QuestionType.parse("Answerable") is QuestionType.ANSWERABLE
    assert QuestionType.parse(" improper ") is QuestionType.IMPROPER
    with pytest.raises(ValueError):
        QuestionType.parse("rhetorical")


def test_needs_sql():
    assert QuestionType.ANSWERABLE.needs_sql
    assert QuestionType.AMBIGUOUS.needs_sql
    assert not QuestionType.UNANSWERABLE.needs_sql
    assert not QuestionType.IMPROPER.needs_sql


def test_load_demo_dialogue(demo_dataset):
    assert len(demo_dataset.dialogues) == 1
    d = demo_dataset.dialogues[0]
    assert d.db_id == "flights"
    assert [t.question_type for t in d.turns] == [
        QuestionType.UNANSWERABLE, QuestionType.ANSWERABLE,
        QuestionType.AMBIGUOUS, QuestionType.IMPROPER]
    assert len(d.turns[2].gold_sqls) == 2  # one per interpretation
    assert d.turns[0].gold_sqls == ()


def test_round_trip(demo_dataset, tmp_path):
    out = tmp_path / "copy.json"
    save_dataset(demo_dataset, out)
    assert load_dataset(out) == demo_dataset


def test_empty_dialogue_list(tmp_path):
    f = tmp_path / "empty.json"
    f.write_text(json.dumps({"split": "fixture", "dialogues": []}))
    assert load_dataset(f).dialogues == ()


def _write_dataset(tmp_path, turns):
    f = tmp_path / "ds.json"
    f.write_text(json.dumps({"split": "fixture", "dialogues": [
        {"dialogue_id": "d1", "db_id": "flights", "turns": turns}]}))
    return f


def test_improper_with_sql_rejected(tmp_path):
    f = _write_dataset(tmp_path, [
        {"turn_index": 1, "question": "hi", "question_type": "improper",
         "gold_sqls": ["SELECT 1"], "gold_response": "hello"}])
    with pytest.raises(InvariantViolation) as exc:
        load_dataset(f)
    assert exc.value.dialogue_id == "d1"
    assert exc.value.turn_index == 1


def test_answerable_needs_exactly_one_sql(tmp_path):
    f = _write_dataset(tmp_path, [
        {"turn_index": 1, "question": "q", "question_type": "answerable",
         "gold_sqls": ["SELECT 1", "SELECT 2"], "gold_response": "r"}])
    with pytest.raises(InvariantViolation):
        load_dataset(f)
    f = _write_dataset(tmp_path, [
        {"turn_index": 1, "question": "q", "question_type": "answerable",
         "gold_sqls": [], "gold_response": "r"}])
    with pytest.raises(InvariantViolation):
        load_dataset(f)


def test_turn_index_contiguity(tmp_path):
    f = _write_dataset(tmp_path, [
        {"turn_index": 2, "question": "q", "question_type": "improper",
         "gold_sqls": [], "gold_response": "r"}])
    with pytest.raises(InvariantViolation):
        load_dataset(f)


def test_duplicate_dialogue_id(tmp_path):
    f = tmp_path / "dupe.json"
    entry = {"dialogue_id": "d1", "db_id": "flights", "turns": [
        {"turn_index": 1, "question": "q", "question_type": "improper",
         "gold_sqls": [], "gold_response": "r"}]}
    f.write_text(json.dumps({"split": "fixture", "dialogues": [entry, entry]}))
    with pytest.raises(InvariantViolation):
        load_dataset(f)


def test_unknown_type_label(tmp_path):
    f = _write_dataset(tmp_path, [
        {"turn_index": 1, "question": "q", "question_type": "noisy",
         "gold_sqls": [], "gold_response": "r"}])
    with pytest.raises(MalformedContainer):
        load_dataset(f)


def test_missing_file(tmp_path):
    with pytest.raises(FileMissing):
        load_dataset(tmp_path / "nope.json")


def test_not_json(tmp_path):
    f = tmp_path / "x.json"
    f.write_text("not json at all {")
    with pytest.raises(MalformedContainer):
        load_dataset(f)


# --- schema introspection ---------------------------------------------------


def test_introspect_flights(flights_schema):
    assert flights_schema.table_names() == ("airports", "airlines", "flights")
    airports = flights_schema.table("airports")
    assert airports.column_names() == ("AirportCode", "AirportName", "City", "Country")
    assert airports.columns[0].is_primary_key
    assert not airports.columns[1].is_primary_key
    assert ForeignKey("flights", "SourceAirport", "airports", "AirportCode") \
        in flights_schema.foreign_keys


def test_introspect_idempotent(flights_db):
    assert introspect_schema(flights_db) == introspect_schema(flights_db)


def test_introspect_empty_db(tmp_path):
    import sqlite3
    p = tmp_path / "empty.sqlite"
    sqlite3.connect(p).close()
    assert introspect_schema(p).tables == ()


def test_introspect_not_a_database(tmp_path):
    p = tmp_path / "fake.sqlite"
    p.write_text("this is just text pretending to be a database file......")
    with pytest.raises(NotADatabase):
        introspect_schema(p)


def test_introspect_missing_db(tmp_path):
    with pytest.raises(FileMissing):
        introspect_schema(tmp_path / "gone.sqlite")


# --- rendering ----------------------------------------------------------------


def test_render_compact_single_table():
    schema = DatabaseSchema(tables=(
        Table("airlines", (Column("uid", "INTEGER", True),
                           Column("name", "TEXT", False))),))
    assert render_schema(schema, "compact") == "airlines(uid*, name)"


def test_render_empty_schema():
    assert render_schema(DatabaseSchema(tables=()), "compact") == ""
    assert render_schema(DatabaseSchema(tables=()), "ddl") == ""


def test_render_ddl_flights(flights_schema):
    ddl = render_schema(flights_schema, "ddl")
    assert ddl.count("CREATE TABLE") == 3
    assert ddl.index("CREATE TABLE airports") < ddl.index("CREATE TABLE airlines")
    assert "FOREIGN KEY (SourceAirport) REFERENCES airports(AirportCode)" in ddl
    assert "PRIMARY KEY (AirportCode)" in ddl


def test_render_deterministic_and_injective(flights_schema, warehouse_schema):
    assert render_schema(flights_schema, "ddl") == render_schema(flights_schema, "ddl")
    assert render_schema(flights_schema, "ddl") != render_schema(warehouse_schema, "ddl")


def test_render_unknown_style(flights_schema):
    with pytest.raises(ValueError):
        render_schema(flights_schema, "fancy")


def test_db_path_convention(db_root):
    assert db_path_for(db_root, "flights").exists()
    assert db_path_for(db_root, "flights").name == "flights.sqlite"
