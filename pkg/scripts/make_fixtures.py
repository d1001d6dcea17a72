#!/usr/bin/env python3
"""Build every committed test fixture: databases, dialogue files, prediction
files, replay cassettes, and the gateway transcript consumed by the frontend
tests.

Cassettes are recorded by running the real pipeline against a scripted backend
(canned completions keyed on prompt content) wrapped in the write-through
recorder, so replayed requests are byte-identical to what the code issues.

Usage: python scripts/make_fixtures.py
"""

from __future__ import annotations

import json
import sqlite3
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from convsql.agents import AgentConfig, refine, run_benchmark, select_schema  # noqa: E402
from convsql.augment import CandidateDialogue, GenConfig, augment_dataset, compare_datasets, verify_refine  # noqa: E402
from convsql.corpus import (  # noqa: E402
    Dialogue,
    QuestionType,
    Turn,
    db_path_for,
    introspect_schema,
    load_dataset,
    save_dataset,
)
from convsql.judge import JudgeConfig, score_response  # noqa: E402
from convsql.llmio import Completion, RecordingBackend, ReplayBackend  # noqa: E402

FIXTURES = REPO / "tests" / "fixtures"
DB_ROOT = FIXTURES / "db"
CASSETTES = FIXTURES / "cassettes"


# ---------------------------------------------------------------------------
# databases


def build_flights_db(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()
    con = sqlite3.connect(path)
    con.executescript("""
    CREATE TABLE airports (
      AirportCode TEXT PRIMARY KEY,
      AirportName TEXT,
      City TEXT,
      Country TEXT
    );
    CREATE TABLE airlines (
      uid INTEGER PRIMARY KEY,
      Name TEXT,
      Abbreviation TEXT,
      Country TEXT
    );
    CREATE TABLE flights (
      Airline INTEGER,
      FlightNo INTEGER,
      SourceAirport TEXT,
      DestAirport TEXT,
      Price REAL,
      PRIMARY KEY (Airline, FlightNo),
      FOREIGN KEY (Airline) REFERENCES airlines(uid),
      FOREIGN KEY (SourceAirport) REFERENCES airports(AirportCode),
      FOREIGN KEY (DestAirport) REFERENCES airports(AirportCode)
    );
    """)
    con.executemany("INSERT INTO airports VALUES (?,?,?,?)", [
        ("APG", "Aberdeen Proving Grounds", "Aberdeen", "United States"),
        ("ATL", "Hartsfield-Jackson", "Atlanta", "United States"),
        ("BOS", "Logan International", "Boston", "United States"),
        ("LAX", "Los Angeles International", "Los Angeles", "United States"),
        ("JFK", "John F. Kennedy International", "New York", "United States"),
    ])
    con.executemany("INSERT INTO airlines VALUES (?,?,?,?)", [
        (1, "Delta Airlines", "DL", "United States"),
        (2, "United Airlines", "UA", "United States"),
        (3, "American Airlines", "AA", "United States"),
        (4, "Southwest Airlines", "WN", "United States"),
    ])
    con.executemany("INSERT INTO flights VALUES (?,?,?,?,?)", [
        (1, 7, "APG", "ATL", 120.5),
        (1, 106, "APG", "BOS", 210.0),
        (1, 301, "ATL", "LAX", 450.0),
        (2, 12, "APG", "JFK", 330.25),
        (2, 55, "BOS", "LAX", 520.0),
        (3, 90, "APG", "LAX", 610.0),
        (3, 21, "JFK", "ATL", 270.75),
        (4, 42, "BOS", "ATL", 150.0),
    ])
    con.commit()
    con.close()


_WAREHOUSE_TABLES = [
    ("products", "product_id INTEGER PRIMARY KEY, name TEXT, price REAL"),
    ("categories", "category_id INTEGER PRIMARY KEY, label TEXT"),
    ("suppliers", "supplier_id INTEGER PRIMARY KEY, name TEXT, country TEXT"),
    ("customers", "customer_id INTEGER PRIMARY KEY, name TEXT, city TEXT"),
    ("orders", "order_id INTEGER PRIMARY KEY, customer_id INTEGER, total REAL"),
    ("order_items", "order_id INTEGER, product_id INTEGER, quantity INTEGER"),
    ("inventory", "product_id INTEGER, warehouse_id INTEGER, quantity INTEGER"),
    ("warehouses", "warehouse_id INTEGER PRIMARY KEY, city TEXT"),
    ("shipments", "shipment_id INTEGER PRIMARY KEY, order_id INTEGER, status TEXT"),
    ("employees", "employee_id INTEGER PRIMARY KEY, name TEXT, role TEXT"),
    ("stores", "store_id INTEGER PRIMARY KEY, city TEXT"),
    ("payments", "payment_id INTEGER PRIMARY KEY, order_id INTEGER, amount REAL"),
    ("reviews", "review_id INTEGER PRIMARY KEY, product_id INTEGER, rating INTEGER"),
    ("promotions", "promotion_id INTEGER PRIMARY KEY, name TEXT, discount REAL"),
    ("regions", "region_id INTEGER PRIMARY KEY, name TEXT"),
]


def build_warehouse_db(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()
    con = sqlite3.connect(path)
    for name, cols in _WAREHOUSE_TABLES:
        con.execute(f"CREATE TABLE {name} ({cols})")
    con.execute("INSERT INTO products VALUES (1, 'widget', 9.99), (2, 'gadget', 19.99)")
    con.execute("INSERT INTO inventory VALUES (1, 1, 40), (2, 1, 0)")
    con.execute("INSERT INTO suppliers VALUES (1, 'Acme Supply', 'United States')")
    con.commit()
    con.close()


# ---------------------------------------------------------------------------
# dialogue + prediction fixtures


DEMO_TURNS = [
    {
        "turn_index": 1,
        "question": "What are the departure times of flights from APG each day?",
        "question_type": "unanswerable",
        "gold_sqls": [],
        "gold_response": "The database has no departure time information; it only "
                         "covers airlines, airports, and flight routes.",
    },
    {
        "turn_index": 2,
        "question": "How many airlines have flights departing from here?",
        "question_type": "answerable",
        "gold_sqls": ["SELECT count(DISTINCT Airline) FROM flights WHERE SourceAirport = 'APG'"],
        "gold_response": "3 airlines have flights departing from APG.",
    },
    {
        "turn_index": 3,
        "question": "What is the flight number of Delta Airlines?",
        "question_type": "ambiguous",
        "gold_sqls": [
            "SELECT T1.FlightNo FROM flights AS T1 JOIN airlines AS T2 ON T1.Airline = T2.uid WHERE T2.Name = 'Delta Airlines' AND T1.SourceAirport = 'APG'",
            "SELECT T1.FlightNo FROM flights AS T1 JOIN airlines AS T2 ON T1.Airline = T2.uid WHERE T2.Name = 'Delta Airlines'",
        ],
        "gold_response": "That could mean Delta flights departing from APG (7, 106) "
                         "or every Delta flight (7, 106, 301). Which did you mean?",
    },
    {
        "turn_index": 4,
        "question": "Thank you!",
        "question_type": "improper",
        "gold_sqls": [],
        "gold_response": "You're welcome!",
    },
]


def write_dialogues() -> None:
    out = FIXTURES / "dialogues"
    out.mkdir(parents=True, exist_ok=True)
    demo = {"split": "fixture", "dialogues": [
        {"dialogue_id": "flights-demo-1", "db_id": "flights", "turns": DEMO_TURNS}]}
    (out / "flights_demo.json").write_text(json.dumps(demo, indent=2) + "\n", encoding="utf-8")

    mix1 = [
        {"turn_index": 1, "question": "How many airports are there?",
         "question_type": "answerable",
         "gold_sqls": ["SELECT count(*) FROM airports"],
         "gold_response": "There are 5 airports."},
        {"turn_index": 2, "question": "How many airlines are there?",
         "question_type": "answerable",
         "gold_sqls": ["SELECT count(*) FROM airlines"],
         "gold_response": "There are 4 airlines."},
        {"turn_index": 3, "question": "What is the flight number of Delta Airlines?",
         "question_type": "ambiguous",
         "gold_sqls": DEMO_TURNS[2]["gold_sqls"],
         "gold_response": DEMO_TURNS[2]["gold_response"]},
        {"turn_index": 4, "question": "Thank you!",
         "question_type": "improper", "gold_sqls": [],
         "gold_response": "You're welcome!"},
        {"turn_index": 5, "question": "What are the departure times from APG?",
         "question_type": "unanswerable", "gold_sqls": [],
         "gold_response": "Departure times are not stored in this database."},
        {"turn_index": 6, "question": "What is the cheapest flight price?",
         "question_type": "answerable",
         "gold_sqls": ["SELECT min(Price) FROM flights"],
         "gold_response": "The cheapest flight costs 120.5."},
    ]
    mix2 = [
        {"turn_index": 1, "question": "List all airport codes.",
         "question_type": "answerable",
         "gold_sqls": ["SELECT AirportCode FROM airports"],
         "gold_response": "APG, ATL, BOS, LAX, JFK."},
        {"turn_index": 2, "question": "Which flights cost more than average?",
         "question_type": "ambiguous",
         "gold_sqls": ["SELECT FlightNo FROM flights WHERE Price > (SELECT avg(Price) FROM flights)"],
         "gold_response": "Flights 55, 90 and 301 cost more than the average price."},
        {"turn_index": 3, "question": "You're so helpful.",
         "question_type": "improper", "gold_sqls": [],
         "gold_response": "Glad to help!"},
        {"turn_index": 4, "question": "Good morning!",
         "question_type": "improper", "gold_sqls": [],
         "gold_response": "Good morning! What would you like to know?"},
        {"turn_index": 5, "question": "Which airline has the best safety record?",
         "question_type": "unanswerable", "gold_sqls": [],
         "gold_response": "Safety records are not part of this database."},
        {"turn_index": 6, "question": "How many flights depart from APG?",
         "question_type": "answerable",
         "gold_sqls": ["SELECT count(*) FROM flights WHERE SourceAirport = 'APG'"],
         "gold_response": "4 flights depart from APG."},
    ]
    tdex12 = {"split": "fixture", "dialogues": [
        {"dialogue_id": "mix-1", "db_id": "flights", "turns": mix1},
        {"dialogue_id": "mix-2", "db_id": "flights", "turns": mix2},
    ]}
    (out / "tdex12.json").write_text(json.dumps(tdex12, indent=2) + "\n",
                                     encoding="utf-8")


def write_preds() -> None:
    out = FIXTURES / "preds"
    out.mkdir(parents=True, exist_ok=True)

    perfect = [
        {"dialogue_id": "flights-demo-1", "turn_index": 1,
         "pred_type": "unanswerable", "pred_sqls": [],
         "response": DEMO_TURNS[0]["gold_response"]},
        {"dialogue_id": "flights-demo-1", "turn_index": 2,
         "pred_type": "answerable", "pred_sqls": DEMO_TURNS[1]["gold_sqls"],
         "response": DEMO_TURNS[1]["gold_response"]},
        {"dialogue_id": "flights-demo-1", "turn_index": 3,
         "pred_type": "ambiguous", "pred_sqls": DEMO_TURNS[2]["gold_sqls"],
         "response": DEMO_TURNS[2]["gold_response"]},
        {"dialogue_id": "flights-demo-1", "turn_index": 4,
         "pred_type": "improper", "pred_sqls": [],
         "response": "You're welcome!"},
    ]
    with open(out / "flights_demo_perfect.jsonl", "w", encoding="utf-8") as fh:
        for rec in perfect:
            fh.write(json.dumps(rec) + "\n")

    # engineered so exactly 3/5 answerable and 1/2 ambiguous turns execute
    # correctly, all 3 improper types match, both unanswerable types miss
    tdex_preds = [
        {"dialogue_id": "mix-1", "turn_index": 1, "pred_type": "answerable",
         "pred_sqls": ["SELECT count(*) FROM airports"], "response": "5."},
        {"dialogue_id": "mix-1", "turn_index": 2, "pred_type": "answerable",
         "pred_sqls": ["SELECT count(*) FROM airlines"], "response": "4."},
        {"dialogue_id": "mix-1", "turn_index": 3, "pred_type": "ambiguous",
         "pred_sqls": ["SELECT T1.FlightNo FROM flights AS T1 JOIN airlines AS T2 ON T1.Airline = T2.uid WHERE T2.Name = 'Delta Airlines'"],
         "response": "7, 106, 301."},
        {"dialogue_id": "mix-1", "turn_index": 4, "pred_type": "improper",
         "pred_sqls": [], "response": "You're welcome!"},
        {"dialogue_id": "mix-1", "turn_index": 5, "pred_type": "answerable",
         "pred_sqls": ["SELECT count(*) FROM flights"], "response": "8."},
        {"dialogue_id": "mix-1", "turn_index": 6, "pred_type": "answerable",
         "pred_sqls": ["SELECT max(Price) FROM flights"], "response": "610.0."},
        {"dialogue_id": "mix-2", "turn_index": 1, "pred_type": "answerable",
         "pred_sqls": ["SELECT AirportCode FROM airports"], "response": "codes."},
        {"dialogue_id": "mix-2", "turn_index": 2, "pred_type": "ambiguous",
         "pred_sqls": ["SELECT FlightNo FROM flights WHERE Price < 100"],
         "response": "none."},
        {"dialogue_id": "mix-2", "turn_index": 3, "pred_type": "improper",
         "pred_sqls": [], "response": "Thanks!"},
        {"dialogue_id": "mix-2", "turn_index": 4, "pred_type": "improper",
         "pred_sqls": [], "response": "Good morning!"},
        {"dialogue_id": "mix-2", "turn_index": 5, "pred_type": "improper",
         "pred_sqls": [], "response": "I don't know."},
        {"dialogue_id": "mix-2", "turn_index": 6, "pred_type": "answerable",
         "pred_sqls": ["SELECT count(*) FROM flights WHERE SourceAirport = 'BOS'"],
         "response": "2."},
    ]
    with open(out / "tdex12.jsonl", "w", encoding="utf-8") as fh:
        for rec in tdex_preds:
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# scripted backend (the "model" behind every recorded cassette)


DETECTOR_REPLIES = {
    "What are the departure times of flights from APG each day?":
        "TYPE: unanswerable\nRESPONSE: The database has no departure time "
        "information; it only covers airlines, airports, and flight routes.",
    "How many airlines have flights departing from here?":
        "TYPE: answerable",
    "What is the flight number of Delta Airlines?":
        "TYPE: ambiguous\n"
        "REWRITE: What are the flight numbers of Delta Airlines flights departing from APG?\n"
        "REWRITE: What are the flight numbers of all Delta Airlines flights?",
    "Thank you!":
        "TYPE: improper\nRESPONSE: You're welcome!",
}

DECOMPOSER_REPLIES = {
    "How many airlines have flights departing from here?":
        "STEP 1: Find the flights departing from APG\n"
        "SQL 1: SELECT * FROM flights WHERE SourceAirport = 'APG'\n"
        "STEP 2: Count the distinct airlines among those flights\n"
        "SQL 2: SELECT count(DISTINCT Airline) FROM flights WHERE SourceAirport = 'APG'",
    "What are the flight numbers of Delta Airlines flights departing from APG?":
        "STEP 1: Find the airline id of Delta Airlines\n"
        "SQL 1: SELECT uid FROM airlines WHERE Name = 'Delta Airlines'\n"
        "STEP 2: List flight numbers from APG for that airline\n"
        "SQL 2: SELECT T1.FlightNo FROM flights AS T1 JOIN airlines AS T2 ON "
        "T1.Airline = T2.uid WHERE T2.Name = 'Delta Airlines' AND T1.SourceAirport = 'APG'",
    "What are the flight numbers of all Delta Airlines flights?":
        "STEP 1: List every flight number operated by Delta Airlines\n"
        "SQL 1: SELECT T1.FlightNo FROM flights AS T1 JOIN airlines AS T2 ON "
        "T1.Airline = T2.uid WHERE T2.Name = 'Delta Airlines'",
    "How many airports are in the database?":
        "STEP 1: Count the airports\n"
        "SQL 1: SELECT count(*) FROM airport",
}

DEFAULT_DECOMPOSER = ("STEP 1: Look at all flights\n"
                      "SQL 1: SELECT * FROM flights")

REFINER_FIXES = {
    "SELECT count(*) FROM airport": "SELECT count(*) FROM airports",
}

SELECTOR_REPLIES = {
    "Which products are out of stock?": json.dumps({"tables": [
        {"name": "products", "columns": ["product_id", "name"]},
        {"name": "inventory", "columns": ["product_id", "quantity"]},
    ]}),
    "List supplier names.": json.dumps({"tables": [
        {"name": "suppliers", "columns": ["name"]},
        {"name": "warehouse_zones", "columns": ["zone"]},
    ]}),
}

JUDGE_REPLIES = {
    ("You're welcome!", "relevance"):
        "Evidence: the reply directly acknowledges the user's thanks.\n"
        "Evidence: it is perfectly clear.\nEvidence: nothing is missing.\n"
        "Evidence: nothing inaccurate.\nEvidence: exactly what was needed.\n"
        "SCORES: relevance=2 clarity=2 completeness=2 accuracy=2 utility=2",
    ("You're welcome!", "clarity"):
        "Evidence: crystal clear phrasing.\nEvidence: fully on-topic.\n"
        "Evidence: complete for a courtesy turn.\nEvidence: accurate.\n"
        "Evidence: minimal but adequate usefulness.\n"
        "SCORES: relevance=2 clarity=2 completeness=2 accuracy=2 utility=1",
    ("You're welcome!", "completeness"):
        "Evidence: covers the courtesy exchange.\nEvidence: relevant reply.\n"
        "Evidence: clear wording.\nEvidence: no factual claims to check.\n"
        "Evidence: modest utility.\n"
        "SCORES: relevance=2 clarity=2 completeness=2 accuracy=1 utility=1",
    ("No departure data is stored.", "relevance"):
        "Evidence: names the missing data.\nEvidence: clear enough.\n"
        "Evidence: lacks alternatives the user could try.\n"
        "Evidence: accurate about the gap.\nEvidence: partially useful.\n"
        "SCORES: relevance=2 clarity=2 completeness=1 accuracy=1 utility=1",
    ("No departure data is stored.", "clarity"):
        "I think this response is decent overall but I cannot settle on scores.",
}

DEFAULT_JUDGE = ("Evidence: generic pass over each criterion.\n"
                 "SCORES: relevance=1 clarity=1 completeness=1 accuracy=1 utility=1")

GEN_REPLIES = {
    "answerable": json.dumps({
        "question": "How many airports are there?",
        "gold_sqls": ["SELECT count(*) FROM airports"],
        "gold_response": "There are 5 airports in total."}),
    "ambiguous": json.dumps({
        "question": "What flights are listed?",
        "gold_sqls": ["SELECT FlightNo FROM flights",
                      "SELECT * FROM flights"],
        "gold_response": "That could mean just the flight numbers or the full "
                         "flight records; here are both readings."}),
    "unanswerable": json.dumps({
        "question": "Which airline has the friendliest crew?",
        "gold_sqls": [],
        "gold_response": "Crew friendliness is not recorded in this database."}),
    "improper": json.dumps({
        "question": "Thanks, this is great!",
        "gold_sqls": [],
        "gold_response": "Any time!"}),
}


class ScriptedBackend:
    """Deterministic stand-in model keyed on prompt content."""

    model_id = "scripted"

    def complete(self, req):
        prompt = req.messages[-1].content
        full = "\n".join(m.content for m in req.messages)
        text = self._route(prompt, full)
        return Completion(text=text, input_tokens=len(full) // 4,
                          output_tokens=len(text) // 4)

    def _route(self, prompt: str, full: str) -> str:
        question = ""
        for line in prompt.splitlines():
            if line.startswith("Question: "):
                question = line[len("Question: "):].strip()
        if "Classify the question" in prompt:
            return DETECTOR_REPLIES.get(question, "TYPE: answerable")
        if "breaking it into simpler sub-questions" in prompt:
            return DECOMPOSER_REPLIES.get(question, DEFAULT_DECOMPOSER)
        if "Translate the question into a single SQLite query" in prompt:
            reply = DECOMPOSER_REPLIES.get(question, DEFAULT_DECOMPOSER)
            return reply.rsplit("SQL", 1)[-1].split(":", 1)[-1].strip()
        if "Correct it while keeping its original intent" in prompt:
            failed = prompt.split("Failed SQL:\n", 1)[-1].split("\n\nExecution error", 1)[0].strip()
            return REFINER_FIXES.get(failed, failed)
        if "picking the smallest set of tables" in prompt:
            return SELECTOR_REPLIES.get(question, json.dumps({"tables": []}))
        if "grading the quality" in prompt:
            response = prompt.split("Candidate response:\n", 1)[-1]
            response = response.split("\n\nScoring rubric", 1)[0].strip()
            first = prompt.split("in this order: ", 1)[-1].split(",", 1)[0].strip()
            return JUDGE_REPLIES.get((response, first), DEFAULT_JUDGE)
        if "You write one new turn" in prompt or "violated the format rules" in prompt:
            qtype = full.split('be of type "', 1)[-1].split('"', 1)[0]
            return GEN_REPLIES.get(qtype, GEN_REPLIES["improper"])
        if "You review one generated" in prompt:
            if "nonexistent" in prompt:
                return json.dumps({"score": 9.5, "reasons": "looks fine to me",
                                   "revisions": []})
            return json.dumps({"score": 8.5, "reasons": "coherent and well typed",
                               "revisions": []})
        if "Two versions of a database" in prompt:
            return "BETTER: A"
        raise AssertionError(f"scripted backend got an unexpected prompt: {prompt[:80]!r}")


# ---------------------------------------------------------------------------
# cassette recording (runs the real code paths)


ABLATIONS = [frozenset(), frozenset({"selector"}), frozenset({"detector"}),
             frozenset({"decomposer"}), frozenset({"refiner"})]


def record_pipeline(demo_dataset) -> None:
    cassette = CASSETTES / "pipeline.jsonl"
    if cassette.exists():
        cassette.unlink()
    backend = RecordingBackend(ScriptedBackend(), cassette)
    for ablation in ABLATIONS:
        run_benchmark(demo_dataset, DB_ROOT, backend,
                      config=AgentConfig(ablation=ablation))
    # fresh single-question sessions, so interactive demos replay cleanly too
    from convsql.agents import new_session, run_turn
    for turn in DEMO_TURNS:
        session = new_session("demo", "flights", DB_ROOT, AgentConfig(), backend)
        run_turn(session, turn["question"])
    # refiner error-then-fix exchange
    schema = introspect_schema(db_path_for(DB_ROOT, "flights"))
    refine(db_path_for(DB_ROOT, "flights"), "SELECT count(*) FROM airport",
           schema, backend, AgentConfig())


def record_selector() -> None:
    cassette = CASSETTES / "selector.jsonl"
    if cassette.exists():
        cassette.unlink()
    backend = RecordingBackend(ScriptedBackend(), cassette)
    schema = introspect_schema(db_path_for(DB_ROOT, "warehouse"))
    cfg = AgentConfig()
    select_schema(schema, (), "Which products are out of stock?", cfg, backend)
    select_schema(schema, (), "List supplier names.", cfg, backend)


def record_judge(demo_dataset) -> None:
    cassette = CASSETTES / "judge.jsonl"
    if cassette.exists():
        cassette.unlink()
    backend = RecordingBackend(ScriptedBackend(), cassette)
    turn4 = demo_dataset.dialogues[0].turns[3]
    turn1 = demo_dataset.dialogues[0].turns[0]
    # golden prompt: grading the courtesy turn with one turn of history
    from convsql.judge import build_judge_prompt
    golden = build_judge_prompt(
        turn4, "You're welcome!",
        history=[(turn1.question, turn1.gold_response)])
    golden_dir = FIXTURES / "golden"
    golden_dir.mkdir(parents=True, exist_ok=True)
    (golden_dir / "judge_prompt.txt").write_text(golden, encoding="utf-8")
    score_response(JudgeConfig(backend=backend, samples_k=3), turn4, "You're welcome!")
    score_response(JudgeConfig(backend=backend, samples_k=2), turn1,
                   "No departure data is stored.")
    # the CLI path judges the perfect prediction file with k=1
    from convsql.judge import judge_run
    from convsql.metrics import load_predictions
    judge_run(JudgeConfig(backend=backend, samples_k=1), demo_dataset,
              load_predictions(FIXTURES / "preds" / "flights_demo_perfect.jsonl"))


def record_augment(demo_dataset) -> tuple:
    cassette = CASSETTES / "augment.jsonl"
    if cassette.exists():
        cassette.unlink()
    backend = RecordingBackend(ScriptedBackend(), cassette)
    cfg = GenConfig(turns_min=3, turns_max=3, seed=28)
    augmented, log = augment_dataset(demo_dataset, DB_ROOT, cfg, backend)
    save_dataset(augmented, FIXTURES / "dialogues" / "augmented_expected.json")

    # a candidate whose answerable gold SQL cannot execute: the review likes
    # it, the mechanical gate must still reject it
    bad = CandidateDialogue(
        dialogue=Dialogue(
            dialogue_id="bad-aug", db_id="flights",
            turns=(Turn(1, "How many rows are in the missing table?",
                        QuestionType.ANSWERABLE,
                        ("SELECT count(*) FROM nonexistent",),
                        "There are none."),)),
        metadata=({"relation": "topic exploration", "sampled_type": "answerable"},))
    schema = introspect_schema(db_path_for(DB_ROOT, "flights"))
    verify_refine(bad, schema, db_path_for(DB_ROOT, "flights"), cfg, backend)
    return augmented, log


def record_compare(demo_dataset, augmented) -> None:
    cassette = CASSETTES / "compare.jsonl"
    if cassette.exists():
        cassette.unlink()
    backend = RecordingBackend(ScriptedBackend(), cassette)
    compare_datasets(demo_dataset, augmented, backend)


def export_gateway_fixtures() -> None:
    """Drive the real gateway over the replay cassette and save the wire data
    the frontend tests replay."""
    from fastapi.testclient import TestClient

    from convsql.gateway import create_app

    backend = ReplayBackend(CASSETTES / "pipeline.jsonl", model_id="scripted")
    app = create_app(DB_ROOT, backend)
    client = TestClient(app)

    databases = client.get("/api/databases").json()
    created = client.post("/api/sessions", json={"db_id": "flights"}).json()
    sid = created["session_id"]
    messages = []
    for turn in DEMO_TURNS:
        resp = client.post(f"/api/sessions/{sid}/messages",
                           json={"question": turn["question"]})
        messages.append(resp.json())
    transcript = client.get(f"/api/sessions/{sid}").json()
    # session ids are random per process; pin them for the committed fixture
    transcript["session_id"] = "fixture-session"
    payload = {
        "databases": databases,
        "created": {"session_id": "fixture-session", "db_id": "flights"},
        "messages": messages,
        "transcript": transcript,
    }
    out = REPO / "frontend" / "test" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    (out / "gateway_fixtures.json").write_text(
        json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def main() -> None:
    CASSETTES.mkdir(parents=True, exist_ok=True)
    build_flights_db(DB_ROOT / "flights" / "flights.sqlite")
    build_warehouse_db(DB_ROOT / "warehouse" / "warehouse.sqlite")
    write_dialogues()
    write_preds()
    demo = load_dataset(FIXTURES / "dialogues" / "flights_demo.json")
    record_pipeline(demo)
    record_selector()
    record_judge(demo)
    augmented, _ = record_augment(demo)
    record_compare(demo, augmented)
    export_gateway_fixtures()
    print("fixtures written under", FIXTURES)


if __name__ == "__main__":
    main()
