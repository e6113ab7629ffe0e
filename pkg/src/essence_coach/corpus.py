"""Corpus loading and heading-based Markdown chunking.

Documents are listed in a JSON manifest and split into chunks at a
configurable set of heading levels (H1 and H2 by default).  Headings that
open a chunk move into the chunk's ``heading_path``; all other text,
including lower-level headings, stays in the chunk body, so joining the
bodies back together reproduces the document minus the split headings.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

TOPICS = ("EssentialisingPractices", "KernelAndLanguage", "Games", "Cards")
DOC_TYPES = ("Presentation", "Guide", "Book", "ResearchArticle", "WebArticle")

_HEADING = re.compile(r"^(#{1,6})\s+(.*?)\s*#*\s*$")
_FENCE = re.compile(r"^(```|~~~)")


class CorpusError(Exception):
    """Manifest or document problem that makes the corpus unusable."""


@dataclass(frozen=True)
class DocumentMeta:
    doc_id: str
    title: str
    topic: str
    doc_type: str
    path: str

    def __post_init__(self) -> None:
        if self.topic not in TOPICS:
            raise CorpusError(f"{self.doc_id}: unknown topic {self.topic!r}")
        if self.doc_type not in DOC_TYPES:
            raise CorpusError(f"{self.doc_id}: unknown doc_type {self.doc_type!r}")


@dataclass(frozen=True)
class Chunk:
    """A heading-delimited unit of corpus text; the retrievable atom."""

    chunk_id: str
    doc_id: str
    heading_path: tuple[str, ...]
    heading_level: int
    body: str
    char_count: int

    def index_text(self) -> str:
        """Text seen by the indexes: heading path prepended to the body.

        Keeps section context retrievable even when the body never repeats
        the heading's words.
        """
        if not self.heading_path:
            return self.body
        return " > ".join(self.heading_path) + "\n" + self.body


@dataclass(frozen=True)
class ChunkPolicy:
    """Controls where chunk boundaries fall.

    ``split_levels``: heading levels that open a new chunk.
    ``max_chars``: oversize chunks are split at paragraph boundaries.
    ``min_chars``: undersize chunks are merged forward into the next chunk
    (0 disables merging).
    """

    split_levels: frozenset[int] = frozenset({1, 2})
    max_chars: int = 4000
    min_chars: int = 200

    def __post_init__(self) -> None:
        if not self.split_levels:
            raise ValueError("split_levels must be nonempty")
        if not self.split_levels <= {1, 2, 3, 4, 5, 6}:
            raise ValueError("split_levels must be heading levels 1..6")
        if self.min_chars >= self.max_chars:
            raise ValueError("min_chars must be < max_chars")


@dataclass
class Corpus:
    docs: list[DocumentMeta] = field(default_factory=list)
    texts: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.docs)


def load_corpus(manifest_path: str | Path) -> Corpus:
    """Load document metadata and raw text from a JSON manifest.

    The manifest is a JSON array of {doc_id, title, topic, doc_type, path};
    relative paths resolve against the manifest's directory.  Order is
    preserved.  A missing file or duplicate doc_id is fatal.
    """
    manifest_path = Path(manifest_path)
    try:
        rows = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorpusError(f"manifest not found: {manifest_path}")
    except json.JSONDecodeError as exc:
        raise CorpusError(f"manifest {manifest_path} is not valid JSON: {exc}")
    if not isinstance(rows, list):
        raise CorpusError(f"manifest {manifest_path} must be a JSON array")

    corpus = Corpus()
    seen: set[str] = set()
    for row in rows:
        try:
            meta = DocumentMeta(
                doc_id=row["doc_id"],
                title=row["title"],
                topic=row["topic"],
                doc_type=row["doc_type"],
                path=row["path"],
            )
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"malformed manifest row {row!r}: {exc}")
        if meta.doc_id in seen:
            raise CorpusError(f"duplicate doc_id in manifest: {meta.doc_id}")
        seen.add(meta.doc_id)

        doc_path = Path(meta.path)
        if not doc_path.is_absolute():
            doc_path = manifest_path.parent / doc_path
        try:
            text = doc_path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise CorpusError(f"{meta.doc_id}: document file not found: {doc_path}")
        corpus.docs.append(meta)
        corpus.texts[meta.doc_id] = text
    return corpus


def _split_sections(
    text: str, title: str, split_levels: frozenset[int]
) -> list[tuple[tuple[str, ...], int, list[str]]]:
    """Scan lines once, returning (heading_path, level, body_lines) sections.

    Heading lines inside fenced code blocks are treated as body text.  A
    heading whose level is not in split_levels stays in the body but still
    updates the ancestor stack for later chunks.
    """
    # stack of (level, text) for the current heading nesting
    stack: list[tuple[int, str]] = []
    sections: list[tuple[tuple[str, ...], int, list[str]]] = []
    current_path: tuple[str, ...] = (title,)
    current_level = 1
    current_lines: list[str] = []
    saw_heading = False
    in_fence = False

    def flush() -> None:
        sections.append((current_path, current_level, current_lines))

    for line in text.splitlines():
        if _FENCE.match(line):
            in_fence = not in_fence
            current_lines.append(line)
            continue
        match = None if in_fence else _HEADING.match(line)
        if match is None:
            current_lines.append(line)
            continue

        level = len(match.group(1))
        heading_text = match.group(2).strip()
        while stack and stack[-1][0] >= level:
            stack.pop()
        stack.append((level, heading_text))

        if level in split_levels:
            if saw_heading or any(ln.strip() for ln in current_lines):
                flush()
            current_path = tuple(h for _, h in stack)
            current_level = level
            current_lines = []
            saw_heading = True
        else:
            # Not a split point: the heading line is ordinary body text.
            current_lines.append(line)
    flush()
    return sections


def _split_paragraphs(body: str) -> list[str]:
    """Split on blank lines, keeping each paragraph's text."""
    paras = re.split(r"\n\s*\n", body)
    return [p.strip() for p in paras if p.strip()]


def _split_oversize(body: str, max_chars: int) -> list[str]:
    """Greedily pack paragraphs into pieces of at most max_chars.

    A single paragraph longer than max_chars is kept whole (indivisible).
    """
    if len(body) <= max_chars:
        return [body]
    pieces: list[str] = []
    buf: list[str] = []
    size = 0
    for para in _split_paragraphs(body):
        added = len(para) if not buf else size + 2 + len(para)
        if buf and added > max_chars:
            pieces.append("\n\n".join(buf))
            buf, size = [], 0
        buf.append(para)
        size = len(para) if size == 0 else size + 2 + len(para)
    if buf:
        pieces.append("\n\n".join(buf))
    return pieces


def chunk_document(doc: DocumentMeta, text: str, policy: ChunkPolicy) -> list[Chunk]:
    """Split one document's Markdown into chunks per the policy.

    Every non-whitespace character of the body lands in exactly one chunk.
    Undersized chunks merge forward into the next chunk (the absorbed
    chunk's heading is demoted to a body line so no text is lost); a
    document with no headings yields a single chunk titled by the doc
    title.
    """
    raw_sections = _split_sections(text, doc.title, policy.split_levels)

    stripped = [
        (path, level, "\n".join(lines).strip()) for path, level, lines in raw_sections
    ]
    sections: list[tuple[tuple[str, ...], int, str]] = []
    for idx, (path, level, body) in enumerate(stripped):
        if not body:
            nxt = stripped[idx + 1] if idx + 1 < len(stripped) else None
            if nxt is not None and nxt[0][: len(path)] == path:
                # Bare heading directly above its subsections: it survives
                # as an ancestor in the next chunk's heading_path.
                continue
            sections.append((path, level, ""))
            continue
        for piece in _split_oversize(body, policy.max_chars):
            sections.append((path, level, piece))

    if not sections:
        sections = [((doc.title,), 1, text.strip())]

    # Merge-forward pass for undersized chunks.
    if policy.min_chars > 0:
        merged: list[tuple[tuple[str, ...], int, str]] = []
        i = 0
        while i < len(sections):
            path, level, body = sections[i]
            while len(body) < policy.min_chars and i + 1 < len(sections):
                nxt_path, _nxt_level, nxt_body = sections[i + 1]
                # Demote the absorbed section's heading into the body.
                demoted = nxt_path[-1] if nxt_path != path else ""
                parts = [p for p in (body, demoted, nxt_body) if p]
                body = "\n\n".join(parts)
                i += 1
            merged.append((path, level, body))
            i += 1
        # Last chunk may still be undersized with nothing ahead: fold it
        # back into its predecessor.
        if (
            len(merged) > 1
            and len(merged[-1][2]) < policy.min_chars
        ):
            path, level, body = merged[-2]
            tail_path, _tail_level, tail_body = merged[-1]
            demoted = tail_path[-1] if tail_path != path else ""
            parts = [p for p in (body, demoted, tail_body) if p]
            merged[-2] = (path, level, "\n\n".join(parts))
            merged.pop()
        sections = merged

    chunks: list[Chunk] = []
    for ordinal, (path, level, body) in enumerate(sections):
        body = body.strip()
        if not body:
            # A trailing heading with no body anywhere to merge into:
            # the heading text itself is the content.
            body = path[-1]
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}#{ordinal:04d}",
                doc_id=doc.doc_id,
                heading_path=path,
                heading_level=level,
                body=body,
                char_count=len(body),
            )
        )
    return chunks


def chunk_corpus(corpus: Corpus, policy: ChunkPolicy) -> list[Chunk]:
    """Chunk every document, concatenated in manifest order."""
    chunks: list[Chunk] = []
    for doc in corpus.docs:
        chunks.extend(chunk_document(doc, corpus.texts[doc.doc_id], policy))
    return chunks


def chunk_map(chunks: list[Chunk]) -> dict[str, Chunk]:
    """Index chunks by chunk_id for retrieval lookups."""
    mapping = {chunk.chunk_id: chunk for chunk in chunks}
    if len(mapping) != len(chunks):
        raise CorpusError("duplicate chunk_id in chunk list")
    return mapping


def save_chunks(chunks: list[Chunk], path: str | Path) -> None:
    """Write chunks as JSON Lines, one object per line, UTF-8."""
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(
                json.dumps(
                    {
                        "chunk_id": chunk.chunk_id,
                        "doc_id": chunk.doc_id,
                        "heading_path": list(chunk.heading_path),
                        "heading_level": chunk.heading_level,
                        "body": chunk.body,
                        "char_count": chunk.char_count,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_chunks(path: str | Path) -> list[Chunk]:
    """Read a JSON Lines chunk store written by save_chunks."""
    chunks: list[Chunk] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            chunks.append(
                Chunk(
                    chunk_id=row["chunk_id"],
                    doc_id=row["doc_id"],
                    heading_path=tuple(row["heading_path"]),
                    heading_level=row["heading_level"],
                    body=row["body"],
                    char_count=row["char_count"],
                )
            )
    return chunks
