import time

import pytest
from fastapi.testclient import TestClient

from convsql.gateway import create_app


@pytest.fixture()
def client(db_root, pipeline_backend):
    return TestClient(create_app(db_root, pipeline_backend))


DEMO_QUESTIONS = [
    "What are the departure times of flights from APG each day?",
    "How many airlines have flights departing from here?",
    "What is the flight number of Delta Airlines?",
    "Thank you!",
]


def _create(client, db_id="flights"):
    resp = client.post("/api/sessions", json={"db_id": db_id})
    assert resp.status_code == 200
    return resp.json()["session_id"]


def test_health(client):
    assert client.get("/api/health").json() == {"status": "ok"}


def test_databases_listing(client):
    dbs = client.get("/api/databases").json()
    by_id = {d["db_id"]: d["table_count"] for d in dbs}
    assert by_id == {"flights": 3, "warehouse": 15}


def test_create_session(client):
    sid = _create(client)
    assert sid and isinstance(sid, str)


def test_unknown_database(client):
    resp = client.post("/api/sessions", json={"db_id": "not-there"})
    assert resp.status_code == 404
    assert resp.json()["error"]["kind"] == "unknown_database"


def test_session_ids_distinct(client):
    assert _create(client) != _create(client)


def test_full_conversation(client):
    sid = _create(client)
    outcomes = []
    for q in DEMO_QUESTIONS:
        resp = client.post(f"/api/sessions/{sid}/messages", json={"question": q})
        assert resp.status_code == 200
        outcomes.append(resp.json())
    types = [o["outcome"]["detected_type"] for o in outcomes]
    assert types == ["unanswerable", "answerable", "ambiguous", "improper"]

    courtesy = outcomes[3]["outcome"]
    assert courtesy["candidate_sqls"] == []
    assert courtesy["response"] == "You're welcome!"

    ambiguous = outcomes[2]["outcome"]
    assert len(ambiguous["candidate_sqls"]) == 2
    assert len(ambiguous["previews"]) == 2
    assert ambiguous["previews"][0]["rows"]
    assert ambiguous["previews"][0]["columns"]
    assert len(ambiguous["rewrites"]) == 2


def test_transcript_order_and_monotonicity(client):
    sid = _create(client)
    assert client.get(f"/api/sessions/{sid}").json()["turns"] == []
    seen = 0
    for q in DEMO_QUESTIONS[:3]:
        client.post(f"/api/sessions/{sid}/messages", json={"question": q})
        turns = client.get(f"/api/sessions/{sid}").json()["turns"]
        assert len(turns) >= seen
        seen = len(turns)
    transcript = client.get(f"/api/sessions/{sid}").json()
    assert [t["question"] for t in transcript["turns"]] == DEMO_QUESTIONS[:3]


def test_unknown_session(client):
    resp = client.post("/api/sessions/ghost/messages", json={"question": "hi"})
    assert resp.status_code == 404
    assert resp.json()["error"]["kind"] == "unknown_session"
    assert client.get("/api/sessions/ghost").status_code == 404


def test_trace_toggle(client):
    sid = _create(client)
    plain = client.post(f"/api/sessions/{sid}/messages",
                        json={"question": "Thank you!"}).json()
    assert "trace" not in plain["outcome"]
    traced = client.post(f"/api/sessions/{sid}/messages?trace=true",
                         json={"question": "Thank you!"}).json()
    assert traced["outcome"]["trace"]


def test_session_config_overrides(db_root, scripted_backend_cls):
    app_client = TestClient(create_app(db_root, scripted_backend_cls()))
    resp = app_client.post("/api/sessions", json={
        "db_id": "flights", "config": {"ablation": ["detector"]}})
    sid = resp.json()["session_id"]
    out = app_client.post(f"/api/sessions/{sid}/messages",
                          json={"question": "Thank you!"}).json()
    # detector disabled: even courtesy turns get treated as answerable
    assert out["outcome"]["detected_type"] == "answerable"


def test_bad_config_rejected(client):
    resp = client.post("/api/sessions", json={
        "db_id": "flights", "config": {"ablation": ["nonsense"]}})
    assert resp.status_code == 400


def test_ttl_eviction(db_root, pipeline_backend):
    client = TestClient(create_app(db_root, pipeline_backend, session_ttl_s=0.05))
    sid = _create(client)
    time.sleep(0.1)
    assert client.get(f"/api/sessions/{sid}").status_code == 404


def test_concurrent_messages_serialize_per_session(db_root, scripted_backend_cls):
    import threading

    client = TestClient(create_app(db_root, scripted_backend_cls()))
    sid = _create(client)
    questions = ["Thank you!", "How many airports are there?"]

    def _post(q):
        client.post(f"/api/sessions/{sid}/messages", json={"question": q})

    threads = [threading.Thread(target=_post, args=(q,)) for q in questions]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    turns = client.get(f"/api/sessions/{sid}").json()["turns"]
    # both turns landed, in some total order, with intact outcomes
    assert sorted(t["question"] for t in turns) == sorted(questions)
    assert all(t["outcome"]["response"] for t in turns)
