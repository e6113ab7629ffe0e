"""BM25 inverted index over chunks: the exact-term half of the ensemble.

Scoring uses the smoothed non-negative IDF ln(1 + (N - df + 0.5) /
(df + 0.5)) so scores never go negative and stay safe to fuse with
cosine similarities.  Documents and queries share one tokenizer; a
chunk's indexed text is its heading path plus body.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Chunk
from .tokenization import tokenize

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

SNAPSHOT_FORMAT = "essence-coach-lexical-v1"


class LexicalIndexError(Exception):
    pass


@dataclass
class LexicalIndex:
    postings: dict[str, list[tuple[str, int]]] = field(default_factory=dict)
    doc_lengths: dict[str, int] = field(default_factory=dict)
    avg_doc_length: float = 0.0
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    @property
    def size(self) -> int:
        return len(self.doc_lengths)


def build_lexical_index(
    chunks: list[Chunk], k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> LexicalIndex:
    """Index every chunk; duplicate chunk_ids are fatal."""
    index = LexicalIndex(k1=k1, b=b)
    for chunk in chunks:
        if chunk.chunk_id in index.doc_lengths:
            raise LexicalIndexError(f"duplicate chunk_id: {chunk.chunk_id}")
        tokens = tokenize(chunk.index_text())
        index.doc_lengths[chunk.chunk_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            index.postings.setdefault(term, []).append((chunk.chunk_id, tf))
    if index.doc_lengths:
        index.avg_doc_length = sum(index.doc_lengths.values()) / len(index.doc_lengths)
    return index


def _idf(index: LexicalIndex, term: str) -> float:
    df = len(index.postings.get(term, ()))
    n = index.size
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def bm25_score(index: LexicalIndex, query_tokens: list[str], chunk_id: str) -> float:
    """Score one chunk against query tokens with the BM25 formula.

    Repeated query tokens contribute once per occurrence.  Zero iff no
    query term occurs in the chunk.
    """
    if chunk_id not in index.doc_lengths:
        raise LexicalIndexError(f"unknown chunk_id: {chunk_id}")
    length = index.doc_lengths[chunk_id]
    score = 0.0
    for term in query_tokens:
        tf = 0
        for posting_id, posting_tf in index.postings.get(term, ()):
            if posting_id == chunk_id:
                tf = posting_tf
                break
        if tf == 0:
            continue
        norm = tf + index.k1 * (1.0 - index.b + index.b * length / index.avg_doc_length)
        score += _idf(index, term) * tf * (index.k1 + 1.0) / norm
    return score


def search_lexical(
    index: LexicalIndex, query: str, k: int
) -> list[tuple[str, float]]:
    """Top-k chunks by BM25, ties broken by ascending chunk_id.

    Chunks matching no query term (score 0) are excluded, so the result
    may be shorter than k, or empty.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query_tokens = tokenize(query)
    scores: dict[str, float] = {}
    for term in query_tokens:
        postings = index.postings.get(term)
        if not postings:
            continue
        idf = _idf(index, term)
        for chunk_id, tf in postings:
            length = index.doc_lengths[chunk_id]
            norm = tf + index.k1 * (
                1.0 - index.b + index.b * length / index.avg_doc_length
            )
            scores[chunk_id] = scores.get(chunk_id, 0.0) + idf * tf * (
                index.k1 + 1.0
            ) / norm
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


def save_lexical_index(index: LexicalIndex, path: str | Path) -> None:
    snapshot = {
        "format": SNAPSHOT_FORMAT,
        "k1": index.k1,
        "b": index.b,
        "doc_lengths": index.doc_lengths,
        "postings": {term: plist for term, plist in sorted(index.postings.items())},
    }
    Path(path).write_text(json.dumps(snapshot, sort_keys=True), encoding="utf-8")


def load_lexical_index(path: str | Path) -> LexicalIndex:
    snapshot = json.loads(Path(path).read_text(encoding="utf-8"))
    if snapshot.get("format") != SNAPSHOT_FORMAT:
        raise LexicalIndexError(f"unrecognized snapshot format in {path}")
    index = LexicalIndex(
        postings={
            term: [(cid, tf) for cid, tf in plist]
            for term, plist in snapshot["postings"].items()
        },
        doc_lengths=snapshot["doc_lengths"],
        k1=snapshot["k1"],
        b=snapshot["b"],
    )
    if index.doc_lengths:
        index.avg_doc_length = sum(index.doc_lengths.values()) / len(index.doc_lengths)
    return index
