"""Chat sessions over HTTP: the backend the web UI and CLI drive.

Sessions live in memory and persist as append-only JSON Lines event
files, one per session, so transcripts survive restarts and stay
diffable.  No event is ever rewritten: summarization compacts only the
prompt-visible window while the transcript keeps every turn.  Requests
within one session are serialized by a per-session lock; different
sessions proceed concurrently against the read-only indexes.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

from pydantic import BaseModel

from .corpus import Chunk
from .embedding import EmbedderConfig
from .ensemble import (
    EnsembleConfig,
    RetrievalError,
    RetrievedContext,
    retrieve,
    retrieve_lexical_only,
)
from .generation import (
    ChatMessage,
    ChatRequest,
    GenerationError,
    PersonaConfig,
    ProviderConfig,
    assemble_prompt,
    complete,
)
from .lexical import LexicalIndex
from .vector import VectorIndex

SUMMARIZE_THRESHOLD = 10
KEEP_RECENT_TURNS = 4

_SUMMARY_SYSTEM_PROMPT = (
    "You condense coaching-chat transcripts. Summarize the conversation "
    "factually in a short paragraph, keeping every decision, question, "
    "and Essence term that later turns may refer back to."
)


class ServiceError(Exception):
    pass


class UnknownSessionError(ServiceError):
    pass


class InvalidRequestError(ServiceError):
    pass


class IndexNotReadyError(ServiceError):
    pass


class ProviderUnavailableError(ServiceError):
    pass


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class ChatTurn:
    speaker: str
    text: str
    timestamp: str
    contexts_used: list[dict] = field(default_factory=list)
    latency_ms: float | None = None
    error: bool = False
    retrieval_fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "speaker": self.speaker,
            "text": self.text,
            "timestamp": self.timestamp,
            "contexts": self.contexts_used,
            "latency_ms": self.latency_ms,
            "error": self.error,
            "retrieval_fallback": self.retrieval_fallback,
        }


@dataclass
class Session:
    session_id: str
    persona: PersonaConfig
    rag_enabled: bool
    created_at: str
    updated_at: str
    history: list[ChatTurn] = field(default_factory=list)
    summary_text: str | None = None
    summarized_until: int = 0
    summaries: list[dict] = field(default_factory=list)


def context_to_dict(context: RetrievedContext) -> dict:
    """Transcript/API serialization of one retrieval hit."""
    return {
        "chunk_id": context.chunk_id,
        "doc_id": context.chunk.doc_id,
        "heading_path": list(context.chunk.heading_path),
        "rank": context.rank,
        "fused_score": context.fused_score,
        "sources": sorted(context.sources),
        "vector_score": context.vector_score,
        "lexical_score": context.lexical_score,
    }


def persona_to_dict(persona: PersonaConfig) -> dict:
    return {
        "role": persona.role,
        "event": persona.event,
        "word_limit": list(persona.word_limit) if persona.word_limit else None,
    }


def persona_from_dict(data: dict | None) -> PersonaConfig:
    if not data:
        return PersonaConfig()
    word_limit = data.get("word_limit")
    try:
        return PersonaConfig(
            role=data.get("role"),
            event=data.get("event"),
            word_limit=tuple(word_limit) if word_limit else None,
        )
    except (ValueError, TypeError) as exc:
        raise InvalidRequestError(str(exc)) from exc


class ChatService:
    """Session registry plus the retrieve/assemble/complete pipeline."""

    def __init__(
        self,
        provider: ProviderConfig,
        data_dir: str | Path,
        chunks: Mapping[str, Chunk] | None = None,
        lexical_index: LexicalIndex | None = None,
        vector_index: VectorIndex | None = None,
        embedder_config: EmbedderConfig | None = None,
        ensemble_config: EnsembleConfig = EnsembleConfig(),
        summarize_threshold: int = SUMMARIZE_THRESHOLD,
        keep_recent: int = KEEP_RECENT_TURNS,
        system_prompt_text: str | None = None,
    ) -> None:
        self.provider = provider
        self.chunks = chunks or {}
        self.lexical_index = lexical_index
        self.vector_index = vector_index
        self.embedder_config = embedder_config
        self.ensemble_config = ensemble_config
        self.summarize_threshold = summarize_threshold
        self.keep_recent = keep_recent
        self.system_prompt_text = system_prompt_text
        self.sessions_dir = Path(data_dir) / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._order: list[str] = []
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._load_existing()

    @property
    def index_ready(self) -> bool:
        return (
            bool(self.chunks)
            and self.lexical_index is not None
            and self.lexical_index.size > 0
            and self.vector_index is not None
            and self.vector_index.size > 0
            and self.embedder_config is not None
        )

    # -- persistence ---------------------------------------------------

    def _session_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.jsonl"

    def _append_event(self, session_id: str, event: dict) -> None:
        line = json.dumps(event, ensure_ascii=False)
        with open(self._session_path(session_id), "a", encoding="utf-8") as handle:
            handle.write(line + "\n")

    def _load_existing(self) -> None:
        loaded = []
        for path in self.sessions_dir.glob("*.jsonl"):
            session = self._replay(path)
            if session is not None:
                loaded.append(session)
        loaded.sort(key=lambda s: (s.created_at, s.session_id))
        for session in loaded:
            self._sessions[session.session_id] = session
            self._order.append(session.session_id)
            self._locks[session.session_id] = threading.Lock()

    @staticmethod
    def _replay(path: Path) -> Session | None:
        session: Session | None = None
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            kind = event.get("event")
            if kind == "created":
                session = Session(
                    session_id=event["session_id"],
                    persona=persona_from_dict(event.get("persona")),
                    rag_enabled=bool(event.get("rag_enabled", True)),
                    created_at=event["created_at"],
                    updated_at=event["created_at"],
                )
            elif session is None:
                continue
            elif kind == "turn":
                session.history.append(
                    ChatTurn(
                        speaker=event["speaker"],
                        text=event["text"],
                        timestamp=event["timestamp"],
                        contexts_used=event.get("contexts", []),
                        latency_ms=event.get("latency_ms"),
                        error=bool(event.get("error", False)),
                        retrieval_fallback=bool(event.get("retrieval_fallback", False)),
                    )
                )
                session.updated_at = event["timestamp"]
            elif kind == "summary":
                session.summary_text = event["text"]
                session.summarized_until = int(event["covers_turns"])
                session.summaries.append(
                    {
                        "text": event["text"],
                        "covers_turns": event["covers_turns"],
                        "timestamp": event["timestamp"],
                    }
                )
                session.updated_at = event["timestamp"]
            elif kind == "config":
                session.persona = persona_from_dict(event.get("persona"))
                session.rag_enabled = bool(event.get("rag_enabled", session.rag_enabled))
                session.updated_at = event["timestamp"]
        return session

    # -- session registry ----------------------------------------------

    def create_session(
        self, persona: PersonaConfig | None = None, rag_enabled: bool = True
    ) -> Session:
        persona = persona or PersonaConfig()
        now = _now_iso()
        session = Session(
            session_id=uuid.uuid4().hex,
            persona=persona,
            rag_enabled=rag_enabled,
            created_at=now,
            updated_at=now,
        )
        with self._registry_lock:
            self._sessions[session.session_id] = session
            self._order.append(session.session_id)
            self._locks[session.session_id] = threading.Lock()
        self._append_event(
            session.session_id,
            {
                "event": "created",
                "session_id": session.session_id,
                "persona": persona_to_dict(persona),
                "rag_enabled": rag_enabled,
                "created_at": now,
            },
        )
        return session

    def get_session(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(f"unknown session: {session_id}") from None

    def list_sessions(self) -> list[Session]:
        """Sessions newest first."""
        with self._registry_lock:
            return [self._sessions[sid] for sid in reversed(self._order)]

    def delete_session(self, session_id: str) -> None:
        """Idempotent: deleting an unknown session is a no-op."""
        with self._registry_lock:
            self._sessions.pop(session_id, None)
            self._locks.pop(session_id, None)
            if session_id in self._order:
                self._order.remove(session_id)
        path = self._session_path(session_id)
        if path.exists():
            path.unlink()

    def update_session(
        self,
        session_id: str,
        persona: PersonaConfig | None = None,
        rag_enabled: bool | None = None,
    ) -> Session:
        """Reconfigure persona/RAG for future turns."""
        with self._lock_for(session_id):
            session = self.get_session(session_id)
            if persona is not None:
                session.persona = persona
            if rag_enabled is not None:
                session.rag_enabled = rag_enabled
            now = _now_iso()
            session.updated_at = now
            self._append_event(
                session_id,
                {
                    "event": "config",
                    "persona": persona_to_dict(session.persona),
                    "rag_enabled": session.rag_enabled,
                    "timestamp": now,
                },
            )
            return session

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            if session_id not in self._locks:
                raise UnknownSessionError(f"unknown session: {session_id}")
            return self._locks[session_id]

    # -- conversation --------------------------------------------------

    def _persist_turn(self, session: Session, turn: ChatTurn) -> None:
        session.history.append(turn)
        session.updated_at = turn.timestamp
        event = {"event": "turn"}
        event.update(turn.to_dict())
        self._append_event(session.session_id, event)

    def _prompt_window(self, session: Session, upto: int) -> tuple[ChatMessage, ...]:
        """Messages shown to the provider for the next completion.

        After summarization the window is the summary (as a system
        message) plus the turns it does not cover; the cutoff backs up
        one turn if needed so the window always resumes on a user turn.
        """
        messages: list[ChatMessage] = []
        start = 0
        if session.summary_text is not None and session.summarized_until <= upto:
            start = session.summarized_until
            if start > 0 and session.history[start].speaker == "assistant":
                start -= 1
            messages.append(
                ChatMessage(
                    "system",
                    "Summary of the conversation so far: " + session.summary_text,
                )
            )
        for turn in session.history[start:upto]:
            messages.append(ChatMessage(turn.speaker, turn.text))
        return tuple(messages)

    def _retrieve(self, text: str) -> tuple[list[RetrievedContext], bool]:
        try:
            return (
                retrieve(
                    text,
                    self.vector_index,
                    self.lexical_index,
                    self.chunks,
                    self.embedder_config,
                    self.ensemble_config,
                ),
                False,
            )
        except RetrievalError:
            fallback = retrieve_lexical_only(
                text, self.lexical_index, self.chunks, self.ensemble_config
            )
            return fallback, True

    def post_message(self, session_id: str, text: str) -> ChatTurn:
        """Run one exchange: persist the user turn, retrieve, complete.

        The user turn is persisted before the provider call, so an
        outage never loses it; a provider failure is recorded as an
        error-flagged assistant turn and re-raised for the transport
        layer to report.
        """
        if not text or not text.strip():
            raise InvalidRequestError("text must be non-empty")
        lock = self._lock_for(session_id)
        with lock:
            session = self.get_session(session_id)
            if session.rag_enabled and not self.index_ready:
                raise IndexNotReadyError("retrieval index is not loaded")
            user_turn = ChatTurn(speaker="user", text=text, timestamp=_now_iso())
            window_end = len(session.history)
            self._persist_turn(session, user_turn)
            contexts: list[RetrievedContext] = []
            fallback = False
            if session.rag_enabled:
                contexts, fallback = self._retrieve(text)
            request = assemble_prompt(
                text,
                contexts,
                session.persona,
                session.rag_enabled,
                history=self._prompt_window(session, window_end),
                model_name=self.provider.model_name,
                provider_id=self.provider.provider_id,
                system_prompt_text=self.system_prompt_text,
            )
            try:
                response = complete(request, self.provider)
            except GenerationError as exc:
                error_turn = ChatTurn(
                    speaker="assistant",
                    text=f"provider error: {exc}",
                    timestamp=_now_iso(),
                    error=True,
                )
                self._persist_turn(session, error_turn)
                raise ProviderUnavailableError(str(exc)) from exc
            turn = ChatTurn(
                speaker="assistant",
                text=response.text,
                timestamp=_now_iso(),
                contexts_used=[context_to_dict(c) for c in contexts],
                latency_ms=response.latency_s * 1000.0,
                retrieval_fallback=fallback,
            )
            self._persist_turn(session, turn)
            return turn

    def summarize_history(self, session_id: str) -> str | None:
        """Compact the prompt window for a long session.

        Turns older than the last keep_recent are summarized by the
        provider; the transcript keeps every original turn.  Below the
        threshold this is a no-op returning None.  Provider failures
        propagate and leave all state untouched.
        """
        lock = self._lock_for(session_id)
        with lock:
            session = self.get_session(session_id)
            if len(session.history) < self.summarize_threshold:
                return None
            cutoff = len(session.history) - self.keep_recent
            transcript = "\n".join(
                f"{turn.speaker}: {turn.text}" for turn in session.history[:cutoff]
            )
            request = ChatRequest(
                system_prompt=_SUMMARY_SYSTEM_PROMPT,
                messages=(
                    ChatMessage("user", "Summarize this conversation:\n" + transcript),
                ),
                model_name=self.provider.model_name,
                provider_id=self.provider.provider_id,
            )
            try:
                response = complete(request, self.provider)
            except GenerationError as exc:
                raise ProviderUnavailableError(str(exc)) from exc
            now = _now_iso()
            session.summary_text = response.text
            session.summarized_until = cutoff
            record = {
                "text": response.text,
                "covers_turns": cutoff,
                "timestamp": now,
            }
            session.summaries.append(record)
            session.updated_at = now
            self._append_event(
                session_id,
                {
                    "event": "summary",
                    "text": response.text,
                    "covers_turns": cutoff,
                    "timestamp": now,
                },
            )
            return response.text


def session_summary(session: Session) -> dict:
    return {
        "session_id": session.session_id,
        "persona": persona_to_dict(session.persona),
        "rag_enabled": session.rag_enabled,
        "created_at": session.created_at,
        "updated_at": session.updated_at,
        "turn_count": len(session.history),
    }


def session_transcript(session: Session) -> dict:
    data = session_summary(session)
    data["turns"] = [turn.to_dict() for turn in session.history]
    data["summaries"] = list(session.summaries)
    return data


# Request bodies live at module scope so FastAPI can resolve the
# endpoints' postponed annotations against the module namespace.
class PersonaBody(BaseModel):
    role: str | None = None
    event: str | None = None
    word_limit: tuple[int, int] | None = None


class CreateSessionBody(BaseModel):
    persona: PersonaBody | None = None
    rag_enabled: bool = True


class MessageBody(BaseModel):
    text: str


class PatchSessionBody(BaseModel):
    persona: PersonaBody | None = None
    rag_enabled: bool | None = None


def _body_persona(body: PersonaBody | None) -> PersonaConfig | None:
    if body is None:
        return None
    return persona_from_dict(body.model_dump())


def create_app(service: ChatService, ui_dir: str | Path | None = None):
    """FastAPI application exposing the chat service HTTP surface.

    ui_dir, when given, is a directory of static files (the built web
    client) mounted at / so the browser UI shares the API's origin.
    """
    from fastapi import FastAPI, Request, Response
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse

    app = FastAPI(title="essence-coach")

    def error_response(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(
            status_code=status,
            content={"error_code": code, "message": message},
        )

    @app.exception_handler(UnknownSessionError)
    async def unknown_session(_: Request, exc: UnknownSessionError):
        return error_response(404, "session_not_found", str(exc))

    @app.exception_handler(InvalidRequestError)
    async def invalid_request(_: Request, exc: InvalidRequestError):
        return error_response(422, "invalid_body", str(exc))

    @app.exception_handler(IndexNotReadyError)
    async def index_not_ready(_: Request, exc: IndexNotReadyError):
        return error_response(503, "index_not_ready", str(exc))

    @app.exception_handler(ProviderUnavailableError)
    async def provider_failed(_: Request, exc: ProviderUnavailableError):
        return error_response(502, "provider_error", str(exc))

    @app.exception_handler(RequestValidationError)
    async def invalid_body(_: Request, exc: RequestValidationError):
        return error_response(422, "invalid_body", str(exc))

    @app.post("/api/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        session = service.create_session(
            persona=_body_persona(body.persona), rag_enabled=body.rag_enabled
        )
        return session_summary(session)

    @app.get("/api/sessions")
    def list_sessions():
        return {"sessions": [session_summary(s) for s in service.list_sessions()]}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return session_transcript(service.get_session(session_id))

    @app.patch("/api/sessions/{session_id}")
    def patch_session(session_id: str, body: PatchSessionBody):
        session = service.update_session(
            session_id,
            persona=_body_persona(body.persona),
            rag_enabled=body.rag_enabled,
        )
        return session_summary(session)

    @app.delete("/api/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        service.delete_session(session_id)
        return Response(status_code=204)

    @app.post("/api/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody):
        turn = service.post_message(session_id, body.text)
        return {
            "reply": turn.text,
            "contexts": [
                {
                    "chunk_id": c["chunk_id"],
                    "doc_id": c["doc_id"],
                    "heading_path": c["heading_path"],
                    "fused_score": c["fused_score"],
                    "rank": c["rank"],
                }
                for c in turn.contexts_used
            ],
            "latency_ms": turn.latency_ms,
            "retrieval_fallback": turn.retrieval_fallback,
        }

    @app.post("/api/sessions/{session_id}/summarize")
    def summarize(session_id: str):
        return {"summary": service.summarize_history(session_id)}

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "corpus_chunks": len(service.chunks),
            "index_ready": service.index_ready,
        }

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        if not Path(ui_dir).is_dir():
            raise ValueError(f"ui directory not found: {ui_dir}")
        # Mounted last: /api routes above keep precedence.
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
