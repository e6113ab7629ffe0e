"""Ensemble retrieval fusing BM25 and cosine rankings.

Both methods rank the corpus for a query; the top k_each from each are
pooled, deduplicated, and ordered by a weighted sum of per-method
min-max normalized scores.  Normalization happens over each method's
top-normalization_pool candidates so the two score scales (unbounded
BM25 vs cosine) become comparable before weighting.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from .corpus import Chunk
from .embedding import EmbedderConfig, EmbeddingError, embed_text
from .lexical import LexicalIndex, search_lexical
from .vector import VectorIndex, search_vector


class RetrievalError(Exception):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    k_each: int = 2
    weight_vector: float = 0.5
    weight_lexical: float = 0.5
    normalization_pool: int = 10

    def __post_init__(self) -> None:
        if self.k_each < 1:
            raise ValueError("k_each must be >= 1")
        if self.weight_vector < 0.0 or self.weight_lexical < 0.0:
            raise ValueError("weights must be non-negative")
        if abs(self.weight_vector + self.weight_lexical - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if self.normalization_pool < self.k_each:
            raise ValueError("normalization_pool must be >= k_each")


@dataclass(frozen=True)
class RetrievedContext:
    """One fused retrieval hit.

    Raw scores are None when the chunk was absent from that method's
    normalization pool; the corresponding normalized score is then 0.
    sources records which top-k_each lists the chunk came from.
    """

    chunk: Chunk
    rank: int
    fused_score: float
    sources: frozenset[str]
    vector_score: float | None
    lexical_score: float | None
    norm_vector: float
    norm_lexical: float

    @property
    def chunk_id(self) -> str:
        return self.chunk.chunk_id


def minmax_normalize(scores: Mapping[str, float]) -> dict[str, float]:
    """Scale a score pool to [0, 1]; a constant pool maps to all 1.0."""
    if not scores:
        return {}
    lo = min(scores.values())
    hi = max(scores.values())
    if hi == lo:
        return {chunk_id: 1.0 for chunk_id in scores}
    return {
        chunk_id: (score - lo) / (hi - lo) for chunk_id, score in scores.items()
    }


def retrieve(
    query: str,
    vector_index: VectorIndex,
    lexical_index: LexicalIndex,
    chunks: Mapping[str, Chunk],
    embedder_config: EmbedderConfig,
    config: EnsembleConfig = EnsembleConfig(),
) -> list[RetrievedContext]:
    """Run both searches and fuse the top k_each of each.

    Result size is at most 2 * k_each and shrinks exactly when the two
    top lists overlap.  Ordered by descending fused score, ties broken
    by ascending chunk_id.  Embedding failures raise RetrievalError;
    callers may then fall back to retrieve_lexical_only.
    """
    try:
        query_vec = embed_text(query, embedder_config)
    except EmbeddingError as exc:
        raise RetrievalError(f"query embedding failed: {exc}") from exc
    vector_pool = search_vector(vector_index, query_vec, config.normalization_pool)
    lexical_pool = search_lexical(lexical_index, query, config.normalization_pool)
    return _fuse(vector_pool, lexical_pool, chunks, config)


def retrieve_lexical_only(
    query: str,
    lexical_index: LexicalIndex,
    chunks: Mapping[str, Chunk],
    config: EnsembleConfig = EnsembleConfig(),
) -> list[RetrievedContext]:
    """Degraded-mode retrieval used when the embedder is unreachable."""
    lexical_pool = search_lexical(lexical_index, query, config.normalization_pool)
    norm = minmax_normalize(dict(lexical_pool))
    result = []
    for rank, (chunk_id, raw) in enumerate(lexical_pool[: 2 * config.k_each], 1):
        result.append(
            RetrievedContext(
                chunk=_lookup(chunks, chunk_id),
                rank=rank,
                fused_score=norm[chunk_id],
                sources=frozenset({"lexical"}),
                vector_score=None,
                lexical_score=raw,
                norm_vector=0.0,
                norm_lexical=norm[chunk_id],
            )
        )
    return result


def _lookup(chunks: Mapping[str, Chunk], chunk_id: str) -> Chunk:
    if chunk_id not in chunks:
        raise RetrievalError(f"retrieved unknown chunk_id: {chunk_id}")
    return chunks[chunk_id]


def _fuse(
    vector_pool: list[tuple[str, float]],
    lexical_pool: list[tuple[str, float]],
    chunks: Mapping[str, Chunk],
    config: EnsembleConfig,
) -> list[RetrievedContext]:
    vector_raw = dict(vector_pool)
    lexical_raw = dict(lexical_pool)
    norm_vector = minmax_normalize(vector_raw)
    norm_lexical = minmax_normalize(lexical_raw)
    sources: dict[str, set[str]] = {}
    for chunk_id, _ in vector_pool[: config.k_each]:
        sources.setdefault(chunk_id, set()).add("vector")
    for chunk_id, _ in lexical_pool[: config.k_each]:
        sources.setdefault(chunk_id, set()).add("lexical")
    fused = {
        chunk_id: config.weight_vector * norm_vector.get(chunk_id, 0.0)
        + config.weight_lexical * norm_lexical.get(chunk_id, 0.0)
        for chunk_id in sources
    }
    ordered = sorted(sources, key=lambda chunk_id: (-fused[chunk_id], chunk_id))
    return [
        RetrievedContext(
            chunk=_lookup(chunks, chunk_id),
            rank=rank,
            fused_score=fused[chunk_id],
            sources=frozenset(sources[chunk_id]),
            vector_score=vector_raw.get(chunk_id),
            lexical_score=lexical_raw.get(chunk_id),
            norm_vector=norm_vector.get(chunk_id, 0.0),
            norm_lexical=norm_lexical.get(chunk_id, 0.0),
        )
        for rank, chunk_id in enumerate(ordered, 1)
    ]


_TRACE_LINE = re.compile(
    r"^rank=(?P<rank>\d+) chunk=(?P<chunk>.+?) sources=(?P<sources>[a-z+]+) "
    r"fused=(?P<fused>\S+) vector_raw=(?P<vr>\S+) vector_norm=(?P<vn>\S+) "
    r"lexical_raw=(?P<lr>\S+) lexical_norm=(?P<ln>\S+)$"
)


def trace_fields(context: RetrievedContext) -> dict:
    """Scalar projection of a context, the unit explain() serializes."""
    return {
        "rank": context.rank,
        "chunk_id": context.chunk_id,
        "sources": context.sources,
        "fused_score": context.fused_score,
        "vector_score": context.vector_score,
        "lexical_score": context.lexical_score,
        "norm_vector": context.norm_vector,
        "norm_lexical": context.norm_lexical,
    }


def explain(result: list[RetrievedContext]) -> str:
    """One line per context with raw, normalized, and fused scores.

    Floats are written with repr so parse_explain recovers them
    bit-exactly.
    """
    lines = []
    for context in result:
        lines.append(
            "rank={rank} chunk={chunk} sources={sources} fused={fused} "
            "vector_raw={vr} vector_norm={vn} lexical_raw={lr} "
            "lexical_norm={ln}".format(
                rank=context.rank,
                chunk=context.chunk_id,
                sources="+".join(sorted(context.sources)),
                fused=repr(context.fused_score),
                vr="none" if context.vector_score is None else repr(context.vector_score),
                vn=repr(context.norm_vector),
                lr="none" if context.lexical_score is None else repr(context.lexical_score),
                ln=repr(context.norm_lexical),
            )
        )
    return "\n".join(lines)


def parse_explain(text: str) -> list[dict]:
    """Inverse of explain over scalar fields, for trace auditing."""
    entries = []
    for line in text.splitlines():
        if not line.strip():
            continue
        match = _TRACE_LINE.match(line)
        if match is None:
            raise ValueError(f"unparseable trace line: {line!r}")
        entries.append(
            {
                "rank": int(match["rank"]),
                "chunk_id": match["chunk"],
                "sources": frozenset(match["sources"].split("+")),
                "fused_score": float(match["fused"]),
                "vector_score": None if match["vr"] == "none" else float(match["vr"]),
                "lexical_score": None if match["lr"] == "none" else float(match["lr"]),
                "norm_vector": float(match["vn"]),
                "norm_lexical": float(match["ln"]),
            }
        )
    return entries
