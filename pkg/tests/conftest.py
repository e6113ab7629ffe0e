"""Shared fixtures: the shipped corpus artifacts and small synthetic corpora."""

from pathlib import Path

import pytest

from essence_coach.corpus import (
    Chunk,
    ChunkPolicy,
    chunk_corpus,
    chunk_map,
    load_corpus,
)
from essence_coach.embedding import EmbedderConfig
from essence_coach.evaluation import load_judgments, load_questions
from essence_coach.generation import ProviderConfig
from essence_coach.lexical import build_lexical_index
from essence_coach.vector import build_vector_index

REPO_ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = REPO_ROOT / "data"


def make_chunk(chunk_id: str, body: str, heading_path=(), level: int = 1) -> Chunk:
    """Bare chunk; empty heading_path keeps index_text() equal to body."""
    return Chunk(
        chunk_id=chunk_id,
        doc_id=chunk_id.split("#")[0],
        heading_path=tuple(heading_path),
        heading_level=level,
        body=body,
        char_count=len(body),
    )


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(DATA_DIR / "corpus_manifest.json")


@pytest.fixture(scope="session")
def corpus_chunks(corpus):
    return chunk_corpus(corpus, ChunkPolicy())


@pytest.fixture(scope="session")
def corpus_chunk_map(corpus_chunks):
    return chunk_map(corpus_chunks)


@pytest.fixture(scope="session")
def hashed_config():
    return EmbedderConfig()


@pytest.fixture(scope="session")
def corpus_lexical(corpus_chunks):
    return build_lexical_index(corpus_chunks)


@pytest.fixture(scope="session")
def corpus_vector(corpus_chunks, hashed_config):
    return build_vector_index(corpus_chunks, hashed_config)


@pytest.fixture(scope="session")
def questions():
    return load_questions(DATA_DIR / "questions.json")


@pytest.fixture(scope="session")
def judgments():
    return load_judgments(DATA_DIR / "judgments.csv")


@pytest.fixture
def mock_provider():
    return ProviderConfig(provider_id="mock", endpoint="mock:echo", model_name="mock-echo")


# A handful of on-topic chunks, enough for both retrieval methods to
# produce full candidate lists on coaching-flavored queries.
_MINI_BODIES = {
    "guide#0000": "An alpha captures an essential dimension of progress. Each alpha "
    "moves through ordered states with checklists that say what achieved means.",
    "guide#0001": "The team alpha tracks how a group forms, collaborates, and performs. "
    "A collaborating team works as one unit with open communication.",
    "guide#0002": "The work alpha covers starting, under control, and concluded. Work "
    "is under control when tasks finish on time and rework stays low.",
    "guide#0003": "Progress poker is a card game for assessing alpha states. Players "
    "compare cards and discuss evidence until the table agrees.",
    "guide#0004": "A retrospective inspects the way of working. The team picks one or "
    "two practices to adapt and records the expected improvement.",
    "guide#0005": "Coaches use checklists during planning to decide which state each "
    "alpha has reached and which items block the next state.",
}


@pytest.fixture
def mini_chunks():
    return [make_chunk(cid, body) for cid, body in _MINI_BODIES.items()]


@pytest.fixture
def mini_runtime(mini_chunks, hashed_config):
    """(chunk_map, lexical, vector) over the mini corpus, hashed backend."""
    lexical = build_lexical_index(mini_chunks)
    vector = build_vector_index(mini_chunks, hashed_config)
    return chunk_map(mini_chunks), lexical, vector
