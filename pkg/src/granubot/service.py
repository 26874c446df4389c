"""HTTP session API over the dialogue engine.

Replies on the wire are plain projections of the engine's replies; the chat
UI never sees anything the CLI would not. Sessions live in memory, expire
after the configured idle time, and process turns strictly one at a time.
"""

from __future__ import annotations

import threading
import time

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, model_validator

from .dialogue import DialogueEngine, Reply, Session
from .errors import SessionEnded
from .policy import tree_to_doc
from .registry import Registry

WIRE_SCHEMA_VERSION = 1


class SessionRequest(BaseModel):
    utterance: str = Field(min_length=1)


class TurnRequest(BaseModel):
    utterance: str | None = None
    option: int | None = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.utterance is None) == (self.option is None):
            raise ValueError("provide exactly one of utterance or option")
        return self


class ReplyModel(BaseModel):
    schema_version: int = WIRE_SCHEMA_VERSION
    kind: str
    text: str
    options: list[dict] = []
    services: list[dict] = []
    end_tag: int = 0
    round: int = 1

    @classmethod
    def from_reply(cls, reply: Reply) -> "ReplyModel":
        return cls(**reply.to_doc())


class SessionResponse(BaseModel):
    session_id: str | None
    reply: ReplyModel


class HealthResponse(BaseModel):
    status: str
    service_types: list[str]
    strategy: str


class _Entry:
    __slots__ = ("session", "deadline", "lock")

    def __init__(self, session: Session, deadline: float):
        self.session = session
        self.deadline = deadline
        self.lock = threading.Lock()


class SessionStore:
    """In-memory session map with idle expiry; volatile across restarts."""

    def __init__(self, ttl: float):
        self.ttl = ttl
        self._entries: dict[str, _Entry] = {}
        self._guard = threading.Lock()

    def put(self, session: Session) -> None:
        with self._guard:
            self._entries[session.id] = _Entry(session, time.monotonic() + self.ttl)

    def get(self, session_id: str) -> _Entry:
        with self._guard:
            self._purge()
            entry = self._entries.get(session_id)
            if entry is None:
                raise KeyError(session_id)
            entry.deadline = time.monotonic() + self.ttl
            return entry

    def _purge(self) -> None:
        now = time.monotonic()
        dead = [sid for sid, e in self._entries.items() if e.deadline < now]
        for sid in dead:
            del self._entries[sid]

    def __len__(self) -> int:
        with self._guard:
            self._purge()
            return len(self._entries)


def create_app(registry: Registry, session_ttl: float = 1800.0,
               strategy: str | None = None, transcript_path=None) -> FastAPI:
    engine = DialogueEngine(registry, strategy=strategy, transcript_path=transcript_path)
    store = SessionStore(session_ttl)
    app = FastAPI(title="granubot", version="0.1.0")
    app.state.engine = engine
    app.state.store = store

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            status="ok",
            service_types=registry.service_types(),
            strategy=engine.strategy,
        )

    @app.post("/sessions", response_model=SessionResponse)
    def create_session(body: SessionRequest):
        session, reply = engine.start_session(body.utterance)
        if session is not None:
            store.put(session)
        return SessionResponse(
            session_id=session.id if session else None,
            reply=ReplyModel.from_reply(reply),
        )

    @app.post("/sessions/{session_id}/turns", response_model=ReplyModel)
    def post_turn(session_id: str, body: TurnRequest):
        try:
            entry = store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown or expired session")
        if not entry.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a turn is already in flight")
        try:
            if body.option is not None:
                reply = engine.handle_option(entry.session, body.option)
            else:
                reply = engine.handle_turn(entry.session, body.utterance)
        except SessionEnded:
            raise HTTPException(status_code=409, detail="session already finished")
        finally:
            entry.lock.release()
        return ReplyModel.from_reply(reply)

    @app.get("/trees/{service_type}")
    def get_tree(service_type: str, strategy: str | None = None):
        try:
            tree = registry.tree_for(service_type, strategy)
        except Exception:
            raise HTTPException(status_code=404, detail=f"no tree for {service_type!r}")
        return tree_to_doc(tree)

    return app
