"""Pluggable text-to-vector embedding.

Two backends share one interface: an external HTTP inference service (for
real sentence-embedding models, model identity is configuration) and a
built-in hashed reference embedder that is deterministic, dependency-free
and fast enough for tests.  All vectors leave this module L2-normalized,
so cosine similarity downstream reduces to a dot product.

Hashed reference definition: lowercase the text and split on
non-alphanumeric boundaries; for each token compute two independent
stable 64-bit hashes h1 and h2; add +1 (h2 even) or -1 (h2 odd) at index
h1 mod dim; L2-normalize the accumulated vector.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import requests

from .tokenization import tokenize

DEFAULT_DIM = 384


class EmbeddingError(Exception):
    """Embedding backend failure."""


class EmbeddingTransportError(EmbeddingError):
    """External backend unreachable or returned a bad response; retryable."""


class InvalidTextError(EmbeddingError):
    """Text cannot be embedded (empty or no tokens)."""


@dataclass(frozen=True)
class EmbedderConfig:
    backend: str = "hashed"  # "hashed" | "external"
    dim: int = DEFAULT_DIM
    endpoint: str | None = None
    model_name: str | None = None
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.backend not in ("hashed", "external"):
            raise ValueError(f"unknown embedding backend: {self.backend!r}")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.backend == "external" and not self.endpoint:
            raise ValueError("external backend requires an endpoint")


def _stable_hash(token: str, salt: bytes) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=salt).digest()
    return int.from_bytes(digest, "big")


def _hashed_embedding(text: str, dim: int) -> np.ndarray:
    tokens = tokenize(text)
    if not tokens:
        raise InvalidTextError("text has no alphanumeric tokens to embed")
    vec = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        index = _stable_hash(token, b"bucket") % dim
        sign = 1.0 if _stable_hash(token, b"sign") % 2 == 0 else -1.0
        vec[index] += sign
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        # Opposite-signed tokens can cancel exactly; set the smallest
        # bucket deterministically (order-independent) so the output
        # stays a unit vector.
        vec[min(_stable_hash(t, b"bucket") for t in tokens) % dim] = 1.0
        norm = 1.0
    return vec / norm


def _external_embeddings(
    texts: list[str], config: EmbedderConfig, session: requests.Session | None = None
) -> list[np.ndarray]:
    payload: dict = {"texts": texts}
    if config.model_name:
        payload["model"] = config.model_name
    http = session or requests
    try:
        resp = http.post(config.endpoint, json=payload, timeout=config.timeout)
    except requests.RequestException as exc:
        raise EmbeddingTransportError(f"embedding endpoint unreachable: {exc}")
    if resp.status_code != 200:
        raise EmbeddingTransportError(
            f"embedding endpoint returned {resp.status_code}: {resp.text[:200]}"
        )
    try:
        vectors = resp.json()["vectors"]
    except (ValueError, KeyError) as exc:
        raise EmbeddingTransportError(f"malformed embedding response: {exc}")
    if len(vectors) != len(texts):
        raise EmbeddingTransportError(
            f"expected {len(texts)} vectors, got {len(vectors)}"
        )
    out: list[np.ndarray] = []
    for values in vectors:
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (config.dim,):
            raise EmbeddingTransportError(
                f"expected dim {config.dim}, got shape {vec.shape}"
            )
        if not np.all(np.isfinite(vec)):
            raise EmbeddingTransportError("non-finite values in embedding")
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise EmbeddingTransportError("zero vector in embedding response")
        out.append(vec / norm)
    return out


def embed_text(
    text: str, config: EmbedderConfig, session: requests.Session | None = None
) -> np.ndarray:
    """Embed one text as a unit-norm vector of config.dim values."""
    if not text or not text.strip():
        raise InvalidTextError("cannot embed empty text")
    if config.backend == "hashed":
        return _hashed_embedding(text, config.dim)
    return _external_embeddings([text], config, session)[0]


def embed_batch(
    texts: Iterable[str], config: EmbedderConfig, session: requests.Session | None = None
) -> list[np.ndarray]:
    """Embed texts in order; element i equals embed_text(texts[i]).

    Any bad text or backend failure aborts the whole batch.
    """
    texts = list(texts)
    if not texts:
        return []
    for text in texts:
        if not text or not text.strip():
            raise InvalidTextError("cannot embed empty text in batch")
    if config.backend == "hashed":
        return [_hashed_embedding(t, config.dim) for t in texts]
    return _external_embeddings(texts, config, session)
