"""HTTP gateway for live multi-turn agent sessions.

Exposes the interactive clarification loop: each posted message runs one
pipeline turn synchronously; ambiguous outcomes enumerate interpretations and
the user's next message simply continues the dialogue. Sessions live in
memory with TTL eviction and strict per-session serialization.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .agents import AgentConfig, Session, new_session, run_turn
from .corpus import db_path_for, introspect_schema
from .executor import ExecLimits, execute

DEFAULT_TTL_S = 3600.0
PREVIEW_ROW_CAP = 50


class UnknownDatabase(Exception):
    pass


class UnknownSession(Exception):
    pass


class CreateSessionBody(BaseModel):
    db_id: str
    config: Optional[dict] = None


class MessageBody(BaseModel):
    question: str


@dataclass
class _Entry:
    session: Session
    turns: list = field(default_factory=list)   # serialized ApiTurn dicts
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)


class SessionStore:
    """In-memory session registry with TTL eviction, safe for concurrent use."""

    def __init__(self, ttl_s: float = DEFAULT_TTL_S):
        self.ttl_s = ttl_s
        self._entries: dict[str, _Entry] = {}
        self._lock = threading.Lock()

    def _sweep(self) -> None:
        now = time.monotonic()
        dead = [sid for sid, e in self._entries.items()
                if now - e.last_access > self.ttl_s]
        for sid in dead:
            del self._entries[sid]

    def add(self, session: Session) -> None:
        with self._lock:
            self._sweep()
            self._entries[session.session_id] = _Entry(session=session)

    def get(self, session_id: str) -> _Entry:
        with self._lock:
            self._sweep()
            entry = self._entries.get(session_id)
            if entry is None:
                raise UnknownSession(session_id)
            entry.last_access = time.monotonic()
            return entry


def _preview_payload(db_path, sql: str, limits: ExecLimits) -> dict:
    outcome = execute(db_path, sql, limits)
    if not outcome.ok:
        return {"error": {"kind": outcome.error_kind,
                          "message": outcome.error_message}}
    table = outcome.table
    return {
        "columns": list(table.column_names),
        "rows": [list(r) for r in table.rows[:PREVIEW_ROW_CAP]],
        "row_count": len(table.rows),
        "truncated": table.truncated or len(table.rows) > PREVIEW_ROW_CAP,
    }


def _api_turn(session: Session, question: str, outcome, include_trace: bool) -> dict:
    previews = [_preview_payload(session.db_path, sql, session.limits)
                for sql in outcome.candidate_sqls]
    payload = {
        "question": question,
        "outcome": {
            "detected_type": outcome.detected_type.value,
            "candidate_sqls": list(outcome.candidate_sqls),
            "rewrites": list(outcome.rewrites),
            "previews": previews,
            "response": outcome.response,
        },
    }
    if include_trace:
        payload["outcome"]["trace"] = list(outcome.trace)
    return payload


def _agent_config(overrides: Optional[dict]) -> AgentConfig:
    if not overrides:
        return AgentConfig()
    kwargs = dict(overrides)
    if "ablation" in kwargs:
        kwargs["ablation"] = frozenset(kwargs["ablation"])
    return AgentConfig(**kwargs)


def _error(status: int, kind: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"kind": kind, "message": message}})


def list_databases(db_root: str | Path) -> list[dict]:
    out = []
    root = Path(db_root)
    if not root.is_dir():
        return out
    for child in sorted(root.iterdir()):
        db_file = child / f"{child.name}.sqlite"
        if child.is_dir() and db_file.exists():
            schema = introspect_schema(db_file)
            out.append({"db_id": child.name, "table_count": len(schema.tables)})
    return out


def create_app(db_root: str | Path, backend,
               config: AgentConfig = AgentConfig(),
               limits: ExecLimits = ExecLimits(),
               session_ttl_s: float = DEFAULT_TTL_S,
               cors_origins: tuple[str, ...] = ("*",),
               static_dir: Optional[str | Path] = None) -> FastAPI:
    """Build the gateway app bound to one database root and backend."""
    app = FastAPI(title="convsql gateway")
    app.add_middleware(
        CORSMiddleware, allow_origins=list(cors_origins),
        allow_methods=["*"], allow_headers=["*"])
    store = SessionStore(ttl_s=session_ttl_s)
    db_root = Path(db_root)

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.get("/api/databases")
    def databases():
        return list_databases(db_root)

    @app.post("/api/sessions")
    def create_session(body: CreateSessionBody):
        if not db_path_for(db_root, body.db_id).exists():
            return _error(404, "unknown_database", f"no database {body.db_id!r}")
        try:
            cfg = _agent_config(body.config)
        except (TypeError, ValueError) as exc:
            return _error(400, "bad_config", str(exc))
        session_id = uuid.uuid4().hex
        session = new_session(session_id, body.db_id, db_root, cfg, backend,
                              limits=limits)
        store.add(session)
        return {"session_id": session_id, "db_id": body.db_id}

    @app.post("/api/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody, request: Request):
        include_trace = request.query_params.get("trace", "") in ("1", "true")
        try:
            entry = store.get(session_id)
        except UnknownSession:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with entry.lock:
            outcome = run_turn(entry.session, body.question)
            turn = _api_turn(entry.session, body.question, outcome, include_trace)
            entry.turns.append(turn)
        return turn

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            entry = store.get(session_id)
        except UnknownSession:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with entry.lock:
            return {"session_id": session_id,
                    "db_id": entry.session.db_id,
                    "turns": list(entry.turns)}

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(db_root: str | Path, backend, host: str = "127.0.0.1", port: int = 8080,
          config: AgentConfig = AgentConfig(), limits: ExecLimits = ExecLimits(),
          static_dir: Optional[str | Path] = None) -> None:
    import uvicorn

    app = create_app(db_root, backend, config=config, limits=limits,
                     static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)
