"""Exact cosine-similarity search over chunk embeddings.

At a few hundred chunks an exhaustive scan costs microseconds, so there
is no approximate-NN structure and no recall confound: rankings are the
true cosine order.  Vectors are unit-norm on entry, so cosine is a dot
product against the stacked matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Chunk
from .embedding import EmbedderConfig, embed_batch

SNAPSHOT_FORMAT = "essence-coach-vectors-v1"


class VectorIndexError(Exception):
    pass


@dataclass
class VectorIndex:
    dim: int
    chunk_ids: list[str] = field(default_factory=list)
    matrix: np.ndarray | None = None  # shape (n, dim), unit-norm rows

    @property
    def size(self) -> int:
        return len(self.chunk_ids)


def build_vector_index(chunks: list[Chunk], config: EmbedderConfig) -> VectorIndex:
    """Embed every chunk's heading path + body and stack the vectors."""
    index = VectorIndex(dim=config.dim)
    if not chunks:
        return index
    seen: set[str] = set()
    for chunk in chunks:
        if chunk.chunk_id in seen:
            raise VectorIndexError(f"duplicate chunk_id: {chunk.chunk_id}")
        seen.add(chunk.chunk_id)
    vectors = embed_batch([chunk.index_text() for chunk in chunks], config)
    index.chunk_ids = [chunk.chunk_id for chunk in chunks]
    index.matrix = np.vstack(vectors)
    return index


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise VectorIndexError(f"dimension mismatch: {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        raise VectorIndexError("cosine undefined for zero vector")
    value = float(np.dot(a, b)) / denom
    return max(-1.0, min(1.0, value))


def search_vector(
    index: VectorIndex, query_embedding: np.ndarray, k: int
) -> list[tuple[str, float]]:
    """Top-k chunks by cosine, ties broken by ascending chunk_id.

    k larger than the index size returns every entry.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.size == 0:
        return []
    query = np.asarray(query_embedding, dtype=np.float64)
    if query.shape != (index.dim,):
        raise VectorIndexError(
            f"query dim {query.shape} does not match index dim {index.dim}"
        )
    norm = float(np.linalg.norm(query))
    if norm == 0.0:
        raise VectorIndexError("cosine undefined for zero query vector")
    scores = index.matrix @ (query / norm)
    order = sorted(range(index.size), key=lambda i: (-scores[i], index.chunk_ids[i]))
    return [(index.chunk_ids[i], float(scores[i])) for i in order[:k]]


def save_vector_index(index: VectorIndex, path: str | Path) -> None:
    snapshot = {
        "format": SNAPSHOT_FORMAT,
        "dim": index.dim,
        "entries": [
            [chunk_id, [float(x) for x in index.matrix[i]]]
            for i, chunk_id in enumerate(index.chunk_ids)
        ],
    }
    Path(path).write_text(json.dumps(snapshot), encoding="utf-8")


def load_vector_index(path: str | Path) -> VectorIndex:
    snapshot = json.loads(Path(path).read_text(encoding="utf-8"))
    if snapshot.get("format") != SNAPSHOT_FORMAT:
        raise VectorIndexError(f"unrecognized snapshot format in {path}")
    index = VectorIndex(dim=snapshot["dim"])
    entries = snapshot["entries"]
    if entries:
        index.chunk_ids = [cid for cid, _ in entries]
        index.matrix = np.asarray([vec for _, vec in entries], dtype=np.float64)
    return index
