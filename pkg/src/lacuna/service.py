"""HTTP restoration service with persistent interactive sessions.

Sessions are append-only JSONL event logs under a data directory:
replaying a session's events over its initial text reproduces the
current text exactly, across process restarts. ``propose`` is read-only;
``accept`` is the only mutator and is serialized per session.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .beam import BeamConfig, scale_attention_for_viz
from .evaluator import context_window, mask_span

MAX_CONTEXT = 1000


class CreateSessionRequest(BaseModel):
    text: str


class ProposeRequest(BaseModel):
    start: int
    length: int
    beam_width: int | None = None
    top_k: int | None = None


class AcceptRequest(BaseModel):
    start: int
    length: int
    text: str


class RestoreRequest(BaseModel):
    text: str
    beam_width: int | None = None
    top_k: int | None = None


@dataclass
class Session:
    id: str
    initial_text: str
    current_text: str
    model: str
    history: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.current_text,
            "initial_text": self.initial_text,
            "model": self.model,
            "history": self.history,
        }


class SessionStore:
    """Append-only, per-session JSONL logs with in-memory replay cache."""

    def __init__(self, root: Path):
        self.root = Path(root) / "sessions"
        self.root.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    def create(self, text: str, model: str) -> Session:
        session_id = uuid.uuid4().hex[:12]
        session = Session(session_id, text, text, model)
        with open(self._path(session_id), "w", encoding="utf-8") as fh:
            fh.write(json.dumps({
                "event": "create", "text": text, "model": model, "ts": time.time(),
            }, ensure_ascii=False) + "\n")
        self._cache[session_id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        if session_id in self._cache:
            return self._cache[session_id]
        path = self._path(session_id)
        if not path.exists():
            return None
        session = self._replay(session_id, path)
        self._cache[session_id] = session
        return session

    @staticmethod
    def _replay(session_id: str, path: Path) -> Session:
        session: Session | None = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                event = json.loads(line)
                if event["event"] == "create":
                    session = Session(session_id, event["text"], event["text"],
                                      event.get("model", "unknown"))
                elif event["event"] == "accept":
                    assert session is not None, "accept before create in session log"
                    start, length = event["start"], event["length"]
                    session.current_text = (
                        session.current_text[:start]
                        + event["text"]
                        + session.current_text[start + length:]
                    )
                    session.history.append({k: event[k] for k in
                                            ("start", "length", "text", "log_prob", "ts")})
        if session is None:
            raise ValueError(f"session log {path} has no create event")
        return session

    def append_accept(self, session: Session, start: int, length: int,
                      text: str, log_prob: float | None) -> None:
        event = {"event": "accept", "start": start, "length": length,
                 "text": text, "log_prob": log_prob, "ts": time.time()}
        with open(self._path(session.id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")
        session.current_text = (
            session.current_text[:start] + text + session.current_text[start + length:]
        )
        session.history.append({k: event[k] for k in
                                ("start", "length", "text", "log_prob", "ts")})


def create_app(
    restorer,
    store_dir: Path,
    model_id: str = "unknown",
    ui_dir: Path | None = None,
    default_beam: BeamConfig = BeamConfig(width=100, top_k=20),
    max_context: int = MAX_CONTEXT,
) -> FastAPI:
    app = FastAPI(title="lacuna restoration service")
    store = SessionStore(Path(store_dir))
    alphabet = restorer.alphabet
    session_chars = alphabet.corpus_symbols() | {"-"}
    accept_chars = alphabet.corpus_symbols()

    def check_text(text: str, allowed: set[str], what: str) -> None:
        for i, ch in enumerate(text):
            if ch not in allowed:
                raise HTTPException(
                    status_code=422,
                    detail=f"{what}: character {ch!r} at position {i} is not allowed",
                )

    def get_session_or_404(session_id: str) -> Session:
        session = store.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    def beam_for(width: int | None, top_k: int | None) -> BeamConfig:
        try:
            return BeamConfig(width=width or default_beam.width,
                              top_k=top_k or default_beam.top_k)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    def propose_hypotheses(text: str, start: int, length: int, beam: BeamConfig) -> dict:
        w0, window = context_window(text, start, length, min(max_context, len(text)))
        masked = mask_span(window, start - w0, length)
        hypotheses = restorer.propose(masked, beam)
        mask = np.array([ch == "?" for ch in masked])
        payload = []
        for h in hypotheses:
            scaled = scale_attention_for_viz(h.attention, mask) if h.attention.size else h.attention
            payload.append({
                "text": h.text,
                "log_prob": h.log_prob,
                "attention": scaled.tolist(),
            })
        return {
            "gap": {"start": start, "length": length},
            "window_start": w0,
            "window": masked,
            "hypotheses": payload,
        }

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "model": model_id}

    @app.post("/v1/sessions")
    def create_session(body: CreateSessionRequest) -> dict:
        if "?" in body.text:
            pos = body.text.index("?")
            raise HTTPException(
                status_code=422,
                detail=f"text: character '?' at position {pos} is not allowed at creation; "
                       "gaps are marked per proposal",
            )
        check_text(body.text, session_chars, "text")
        session = store.create(body.text, model_id)
        return {"id": session.id}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return get_session_or_404(session_id).to_dict()

    @app.post("/v1/sessions/{session_id}/propose")
    def propose(session_id: str, body: ProposeRequest) -> dict:
        session = get_session_or_404(session_id)
        text = session.current_text
        if not (0 <= body.start and body.start + body.length <= len(text) and body.length > 0):
            raise HTTPException(status_code=422, detail="span out of bounds")
        span = text[body.start : body.start + body.length]
        if set(span) != {"-"}:
            raise HTTPException(
                status_code=422,
                detail="span must lie inside a run of missing-character marks",
            )
        return propose_hypotheses(text, body.start, body.length, beam_for(body.beam_width, body.top_k))

    @app.post("/v1/sessions/{session_id}/accept")
    def accept(session_id: str, body: AcceptRequest) -> dict:
        with store.lock(session_id):
            session = get_session_or_404(session_id)
            if len(body.text) != body.length:
                raise HTTPException(
                    status_code=422,
                    detail=f"replacement has {len(body.text)} characters for a span of {body.length}",
                )
            if not (0 <= body.start and body.start + body.length <= len(session.current_text)):
                raise HTTPException(status_code=422, detail="span out of bounds")
            check_text(body.text, accept_chars, "replacement")
            store.append_accept(session, body.start, body.length, body.text, None)
            return session.to_dict()

    @app.post("/v1/restore")
    def restore_once(body: RestoreRequest) -> dict:
        runs = [i for i, ch in enumerate(body.text) if ch == "?"]
        if not runs:
            raise HTTPException(status_code=422, detail="text has no '?' positions to predict")
        start = runs[0]
        length = 1
        while start + length < len(body.text) and body.text[start + length] == "?":
            length += 1
        beam = beam_for(body.beam_width, body.top_k)
        return propose_hypotheses(
            body.text[:start] + "-" * length + body.text[start + length :],
            start, length, beam,
        )

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
