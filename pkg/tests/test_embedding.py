"""Embedding backend tests: hashed reference oracle and external client."""

import hashlib

import numpy as np
import pytest
import requests

from essence_coach.embedding import (
    EmbedderConfig,
    EmbeddingTransportError,
    InvalidTextError,
    embed_batch,
    embed_text,
)


def _hash(token: str, salt: bytes) -> int:
    # Independent restatement of the documented hashing scheme.
    return int.from_bytes(
        hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=salt).digest(), "big"
    )


def _reference_embedding(tokens: list[str], dim: int) -> np.ndarray:
    vec = np.zeros(dim)
    for token in tokens:
        sign = 1.0 if _hash(token, b"sign") % 2 == 0 else -1.0
        vec[_hash(token, b"bucket") % dim] += sign
    return vec / np.linalg.norm(vec)


def test_config_validation():
    with pytest.raises(ValueError):
        EmbedderConfig(backend="magic")
    with pytest.raises(ValueError):
        EmbedderConfig(dim=0)
    with pytest.raises(ValueError):
        EmbedderConfig(backend="external")
    EmbedderConfig(backend="external", endpoint="http://e/v1")


def test_hashed_matches_independent_reference():
    config = EmbedderConfig(dim=8)
    # Precomputed with the reference: a -> bucket 3 sign +, b -> bucket 4 sign +.
    got = embed_text("a b", config)
    want = np.zeros(8)
    want[3] = want[4] = 1.0 / np.sqrt(2.0)
    assert np.array_equal(got, want)
    for text in ("alpha state card", "the team collaborates", "work under control"):
        assert np.array_equal(
            embed_text(text, config), _reference_embedding(text.lower().split(), 8)
        )


def test_hashed_repeated_tokens_accumulate():
    got = embed_text("a a b", EmbedderConfig(dim=8))
    want = np.zeros(8)
    want[3], want[4] = 2.0, 1.0
    assert np.array_equal(got, want / np.sqrt(5.0))


def test_hashed_is_a_token_bag():
    config = EmbedderConfig(dim=64)
    assert np.array_equal(embed_text("alpha beta", config), embed_text("beta ALPHA!", config))


def test_hashed_is_deterministic_and_unit_norm():
    config = EmbedderConfig()
    first = embed_text("the way of working evolves", config)
    second = embed_text("the way of working evolves", config)
    assert np.array_equal(first, second)
    assert first.shape == (384,)
    assert abs(float(np.linalg.norm(first)) - 1.0) < 1e-12


def test_hashed_cancellation_nudge():
    # c and d share bucket 5 at dim 8 with opposite signs: exact cancellation.
    got = embed_text("c d", EmbedderConfig(dim=8))
    want = np.zeros(8)
    want[5] = 1.0
    assert np.array_equal(got, want)
    # Same cancellation at dim 1 via a (+) and c (-).
    assert np.array_equal(embed_text("a c", EmbedderConfig(dim=1)), np.array([1.0]))


def test_empty_or_tokenless_text_raises():
    config = EmbedderConfig(dim=8)
    with pytest.raises(InvalidTextError):
        embed_text("", config)
    with pytest.raises(InvalidTextError):
        embed_text("   ", config)
    with pytest.raises(InvalidTextError):
        embed_text("!!! ---", config)


def test_embed_batch_matches_embed_text():
    config = EmbedderConfig(dim=32)
    texts = ["one small step", "alpha beta gamma", "checklist item"]
    batch = embed_batch(texts, config)
    assert len(batch) == 3
    for text, vec in zip(texts, batch):
        assert np.array_equal(vec, embed_text(text, config))
    assert embed_batch([], config) == []


def test_embed_batch_aborts_on_any_bad_text():
    with pytest.raises(InvalidTextError):
        embed_batch(["fine", "  "], EmbedderConfig(dim=8))


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text="err"):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def post(self, url, json=None, timeout=None):
        self.calls.append({"url": url, "json": json, "timeout": timeout})
        response = self.responses.pop(0)
        if isinstance(response, Exception):
            raise response
        return response


EXTERNAL = EmbedderConfig(backend="external", dim=3, endpoint="http://embed/v1", model_name="m1")


def test_external_backend_normalizes_and_orders():
    session = FakeSession([FakeResponse(payload={"vectors": [[3.0, 0.0, 0.0], [0.0, 0.0, 2.0]]})])
    out = embed_batch(["first", "second"], EXTERNAL, session=session)
    assert np.array_equal(out[0], np.array([1.0, 0.0, 0.0]))
    assert np.array_equal(out[1], np.array([0.0, 0.0, 1.0]))
    call = session.calls[0]
    assert call["url"] == "http://embed/v1"
    assert call["json"] == {"texts": ["first", "second"], "model": "m1"}
    assert call["timeout"] == EXTERNAL.timeout


def test_external_backend_single_text():
    session = FakeSession([FakeResponse(payload={"vectors": [[0.0, 4.0, 0.0]]})])
    vec = embed_text("hello", EXTERNAL, session=session)
    assert np.array_equal(vec, np.array([0.0, 1.0, 0.0]))


def test_external_backend_omits_model_when_unset():
    config = EmbedderConfig(backend="external", dim=3, endpoint="http://embed/v1")
    session = FakeSession([FakeResponse(payload={"vectors": [[1.0, 0.0, 0.0]]})])
    embed_text("hello", config, session=session)
    assert "model" not in session.calls[0]["json"]


@pytest.mark.parametrize(
    "response",
    [
        FakeResponse(status_code=500),
        FakeResponse(payload={"wrong": []}),
        FakeResponse(payload={"vectors": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]}),  # count
        FakeResponse(payload={"vectors": [[1.0, 0.0]]}),  # dim
        FakeResponse(payload={"vectors": [[1.0, float("nan"), 0.0]]}),
        FakeResponse(payload={"vectors": [[0.0, 0.0, 0.0]]}),
        FakeResponse(payload=None),  # non-JSON body
        requests.ConnectionError("down"),
    ],
)
def test_external_backend_failures_raise_transport_error(response):
    session = FakeSession([response])
    with pytest.raises(EmbeddingTransportError):
        embed_text("hello", EXTERNAL, session=session)
