"""Prompt assembly and chat-completion provider client.

assemble_prompt builds the augmented request: a system prompt carrying
the coach role, persona/event directives, and an optional word limit,
plus a user message holding the query with retrieved contexts appended
verbatim under auditable delimiter lines.  complete sends the request
over a single chat-completion wire shape (model + role/content message
list in, text out) with retry/backoff on transport failures.

Endpoints with the "mock:" scheme are served in-process by a
deterministic echo backend so experiments and tests run offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from importlib import resources

import requests

ROLES = ("Scrum Master", "Product Owner", "Developer")
EVENTS = ("Sprint Planning", "Retrospective", "Daily Standup", "Sprint Review")
SPEAKERS = ("user", "assistant", "system")

_BACKOFF_BASE_S = 1.0
_BACKOFF_FACTOR = 2.0
_BODY_EXCERPT_CHARS = 200


class GenerationError(Exception):
    pass


class ProviderConfigError(GenerationError):
    """Bad provider setup, detected before any network call."""


class ProviderRequestError(GenerationError):
    """Non-retryable provider rejection (HTTP 4xx or bad payload)."""


class ProviderTransportError(GenerationError):
    """Timeout or connection failure after exhausting retries."""


@dataclass(frozen=True)
class PersonaConfig:
    """Optional role/event framing and response word limit."""

    role: str | None = None
    event: str | None = None
    word_limit: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.role is not None and self.role not in ROLES:
            raise ValueError(f"unknown role: {self.role!r}")
        if self.event is not None and self.event not in EVENTS:
            raise ValueError(f"unknown event: {self.event!r}")
        if self.word_limit is not None:
            lo, hi = self.word_limit
            if not (0 < lo <= hi):
                raise ValueError("word_limit must satisfy 0 < min <= max")


@dataclass(frozen=True)
class ChatMessage:
    speaker: str
    text: str

    def __post_init__(self) -> None:
        if self.speaker not in SPEAKERS:
            raise ValueError(f"unknown speaker: {self.speaker!r}")


@dataclass(frozen=True)
class ChatRequest:
    """A fully assembled completion request.

    The system prompt is kept apart from messages; the wire layer
    prepends it as the single leading system message.  Non-system
    messages must alternate starting with user; system-speaker
    summaries may be interleaved anywhere.
    """

    system_prompt: str
    messages: tuple[ChatMessage, ...]
    model_name: str = ""
    provider_id: str = ""

    def __post_init__(self) -> None:
        expected = "user"
        for message in self.messages:
            if message.speaker == "system":
                continue
            if message.speaker != expected:
                raise ValueError("messages must alternate user/assistant")
            expected = "assistant" if expected == "user" else "user"


@dataclass(frozen=True)
class ProviderConfig:
    """How to reach one chat-completion provider.

    auth_env names an environment variable holding the credential; the
    secret itself never appears in config, requests stored on disk,
    logs, or error text.  response_path optionally gives a dotted path
    to the reply text for vendors that nest it (e.g.
    "choices.0.message.content").
    """

    provider_id: str
    endpoint: str
    model_name: str
    auth_env: str | None = None
    timeout: float = 60.0
    max_retries: int = 2
    response_path: str | None = None

    def __post_init__(self) -> None:
        if not self.endpoint:
            raise ValueError("endpoint must be non-empty")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def is_mock(self) -> bool:
        return self.endpoint.startswith("mock:")


@dataclass
class ChatResponse:
    text: str
    latency_s: float
    retries: int = 0
    token_usage: dict | None = None


def default_system_prompt() -> str:
    """The canonical coach system prompt shipped with the package."""
    prompt = resources.files("essence_coach").joinpath("data/system_prompt.txt")
    return prompt.read_text(encoding="utf-8").strip()


def context_header(rank: int, doc_id: str, heading_path: tuple[str, ...]) -> str:
    """Delimiter line naming exactly what the model was shown."""
    return f"--- context {rank}: {doc_id} / {' > '.join(heading_path)} ---"


def assemble_prompt(
    query: str,
    contexts: list,
    persona: PersonaConfig,
    rag_enabled: bool,
    history: tuple[ChatMessage, ...] = (),
    model_name: str = "",
    provider_id: str = "",
    system_prompt_text: str | None = None,
) -> ChatRequest:
    """Build the completion request for one user query.

    Pure: identical inputs give an identical ChatRequest.  Context
    bodies are included verbatim.  With rag_enabled false the user
    message is exactly the query.
    """
    if not query:
        raise ValueError("query must be non-empty")
    if contexts and not rag_enabled:
        raise ValueError("contexts supplied while rag_enabled is false")
    base = system_prompt_text if system_prompt_text is not None else default_system_prompt()
    parts = [base]
    if persona.role is not None:
        parts.append(f"Answer from the perspective of a {persona.role}.")
    if persona.event is not None:
        parts.append(f"The team is currently in a {persona.event} session.")
    if persona.word_limit is not None:
        lo, hi = persona.word_limit
        parts.append(f"Keep your answer between {lo} and {hi} words.")
    system_prompt = "\n".join(parts)
    blocks = [query]
    for context in contexts:
        header = context_header(
            context.rank, context.chunk.doc_id, context.chunk.heading_path
        )
        blocks.append(header + "\n" + context.chunk.body)
    user_text = "\n\n".join(blocks)
    return ChatRequest(
        system_prompt=system_prompt,
        messages=tuple(history) + (ChatMessage("user", user_text),),
        model_name=model_name,
        provider_id=provider_id,
    )


def _wire_messages(request: ChatRequest) -> list[dict]:
    wire = [{"role": "system", "content": request.system_prompt}]
    for message in request.messages:
        wire.append({"role": message.speaker, "content": message.text})
    return wire


def _extract_text(payload: dict, provider: ProviderConfig) -> str:
    if provider.response_path:
        node = payload
        for key in provider.response_path.split("."):
            if isinstance(node, list) and key.isdigit() and int(key) < len(node):
                node = node[int(key)]
            elif isinstance(node, dict) and key in node:
                node = node[key]
            else:
                raise ProviderRequestError(
                    f"response_path {provider.response_path!r} not found in reply"
                )
        if not isinstance(node, str):
            raise ProviderRequestError("response_path did not resolve to text")
        return node
    if isinstance(payload.get("text"), str):
        return payload["text"]
    choices = payload.get("choices")
    if isinstance(choices, list) and choices:
        message = choices[0].get("message", {})
        if isinstance(message.get("content"), str):
            return message["content"]
    message = payload.get("message")
    if isinstance(message, dict) and isinstance(message.get("content"), str):
        return message["content"]
    raise ProviderRequestError("provider reply carries no text field")


def mock_reply(request: ChatRequest) -> str:
    """Deterministic offline completion: echo the last user message.

    A short digest of the full request is appended so distinct system
    prompts or histories yield distinct replies, which keeps experiment
    configurations distinguishable in transcripts.
    """
    last_user = ""
    for message in reversed(request.messages):
        if message.speaker == "user":
            last_user = message.text
            break
    digest = hashlib.sha256(
        json.dumps(_wire_messages(request), sort_keys=True).encode("utf-8")
    ).hexdigest()[:8]
    return f"{last_user}\n[mock:{request.model_name or 'echo'}:{digest}]"


def _resolve_credential(provider: ProviderConfig) -> str | None:
    if provider.auth_env is None:
        return None
    secret = os.environ.get(provider.auth_env)
    if not secret:
        raise ProviderConfigError(
            f"credential variable {provider.auth_env} is not set"
        )
    return secret


def _post_once(
    request: ChatRequest, provider: ProviderConfig, secret: str | None, session
) -> dict:
    headers = {"Content-Type": "application/json"}
    if secret is not None:
        headers["Authorization"] = f"Bearer {secret}"
    body = {"model": provider.model_name, "messages": _wire_messages(request)}
    try:
        response = session.post(
            provider.endpoint, json=body, headers=headers, timeout=provider.timeout
        )
    except (requests.Timeout, requests.ConnectionError) as exc:
        raise ProviderTransportError(
            f"provider {provider.provider_id} unreachable: {type(exc).__name__}"
        ) from exc
    if 400 <= response.status_code < 500:
        excerpt = response.text[:_BODY_EXCERPT_CHARS]
        raise ProviderRequestError(
            f"provider {provider.provider_id} rejected request "
            f"({response.status_code}): {excerpt}"
        )
    if response.status_code != 200:
        raise ProviderTransportError(
            f"provider {provider.provider_id} returned {response.status_code}"
        )
    try:
        return response.json()
    except ValueError as exc:
        raise ProviderRequestError(
            f"provider {provider.provider_id} returned non-JSON body"
        ) from exc


def complete(
    request: ChatRequest, provider: ProviderConfig, session=None
) -> ChatResponse:
    """Obtain a completion, retrying transport failures with backoff.

    Timeouts and connection errors are retried up to max_retries with
    exponential backoff (1s base, doubling).  HTTP 4xx is never
    retried.  A missing credential fails before any network traffic.
    """
    start = time.monotonic()
    if provider.is_mock:
        text = mock_reply(request)
        return ChatResponse(text=text, latency_s=time.monotonic() - start)
    secret = _resolve_credential(provider)
    if session is None:
        session = requests.Session()
    delay = _BACKOFF_BASE_S
    attempts = provider.max_retries + 1
    last_error: ProviderTransportError | None = None
    for attempt in range(attempts):
        try:
            payload = _post_once(request, provider, secret, session)
        except ProviderTransportError as exc:
            last_error = exc
            if attempt + 1 < attempts:
                time.sleep(delay)
                delay *= _BACKOFF_FACTOR
            continue
        text = _extract_text(payload, provider)
        if not text:
            raise ProviderRequestError(
                f"provider {provider.provider_id} returned empty text"
            )
        usage = payload.get("usage") if isinstance(payload.get("usage"), dict) else None
        return ChatResponse(
            text=text,
            latency_s=time.monotonic() - start,
            retries=attempt,
            token_usage=usage,
        )
    raise last_error
