"""Retrieval metrics, semantic response scoring, and experiment runs.

Covers the full evaluation surface: Precision@K / MRR / MAP over
relevance judgments, a token-embedding greedy-matching scorer for
comparing generated answers to references, aggregation of 1-3 human
ratings, and a runner that replays the benchmark question set through
the chat pipeline per model configuration and tabulates the results.

Metric conventions (stated here because the formulas leave them open):
Precision@K keeps denominator K even when fewer than K items were
retrieved; a query with no relevant item retrieved contributes 0 to
both MRR and MAP; AP normalizes by the number of relevant items that
appear in the ranked list.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Chunk
from .embedding import EmbedderConfig, InvalidTextError, embed_batch
from .ensemble import EnsembleConfig, retrieve
from .generation import PersonaConfig, ProviderConfig
from .lexical import LexicalIndex
from .service import ChatService, ProviderUnavailableError
from .tokenization import tokenize
from .vector import VectorIndex

CATEGORIES = ("Information", "DecisionMaking", "Translation")
CRITERIA = ("relevance", "accuracy", "completeness")
DEFAULT_WORD_LIMIT = (100, 250)
DEFAULT_K = 4


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class Question:
    question_id: str
    text: str
    category: str
    reference_answer: str
    has_known_answer_in_corpus: bool = False

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category: {self.category!r}")
        if not self.text:
            raise ValueError("question text must be non-empty")
        if not self.reference_answer:
            raise ValueError("reference_answer must be non-empty")


@dataclass(frozen=True)
class RelevanceJudgment:
    question_id: str
    chunk_id: str
    relevant: bool
    judge_id: str


@dataclass(frozen=True)
class HumanScore:
    question_id: str
    model_config_id: str
    relevance: int
    accuracy: int
    completeness: int
    judge_id: str

    def __post_init__(self) -> None:
        for name in CRITERIA:
            value = getattr(self, name)
            if value not in (1, 2, 3):
                raise ValueError(f"{name} must be 1, 2, or 3, got {value}")


@dataclass(frozen=True)
class ModelConfig:
    config_id: str
    provider: ProviderConfig
    rag_enabled: bool


# -- ranking metrics ----------------------------------------------------


def precision_at_k(ranked: Sequence[str], relevant: set[str], k: int) -> float:
    """Fraction of the top k that is relevant; short lists count as misses."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for chunk_id in ranked[:k] if chunk_id in relevant)
    return hits / k


def reciprocal_rank(ranked: Sequence[str], relevant: set[str]) -> float:
    """1/rank of the first relevant item, 0 when none is retrieved."""
    for position, chunk_id in enumerate(ranked, 1):
        if chunk_id in relevant:
            return 1.0 / position
    return 0.0


def mean_reciprocal_rank(values: Iterable[float]) -> float:
    values = list(values)
    if not values:
        raise EvaluationError("MRR needs at least one query")
    return sum(values) / len(values)


def average_precision(ranked: Sequence[str], relevant: set[str]) -> float:
    """Mean of precision at each relevant rank, over relevant retrieved."""
    hits = 0
    total = 0.0
    for position, chunk_id in enumerate(ranked, 1):
        if chunk_id in relevant:
            hits += 1
            total += hits / position
    if hits == 0:
        return 0.0
    return total / hits


def mean_average_precision(values: Iterable[float]) -> float:
    values = list(values)
    if not values:
        raise EvaluationError("MAP needs at least one query")
    return sum(values) / len(values)


def relevant_sets(judgments: Iterable[RelevanceJudgment]) -> dict[str, set[str]]:
    """Per-question relevant chunk sets; relevant if any judge said so."""
    sets: dict[str, set[str]] = {}
    for judgment in judgments:
        bucket = sets.setdefault(judgment.question_id, set())
        if judgment.relevant:
            bucket.add(judgment.chunk_id)
    return sets


def evaluate_retrieval(
    rankings: Mapping[str, Sequence[str]],
    judgments: Iterable[RelevanceJudgment],
    k: int = DEFAULT_K,
) -> dict:
    """Score ranked lists against judgments: Precision@k, MRR, MAP."""
    if not rankings:
        raise EvaluationError("no rankings to evaluate")
    sets = relevant_sets(judgments)
    per_question = {}
    for question_id in sorted(rankings):
        ranked = list(rankings[question_id])
        relevant = sets.get(question_id, set())
        per_question[question_id] = {
            "precision_at_k": precision_at_k(ranked, relevant, k),
            "reciprocal_rank": reciprocal_rank(ranked, relevant),
            "average_precision": average_precision(ranked, relevant),
            "retrieved": ranked,
        }
    rows = per_question.values()
    return {
        "k": k,
        "precision_at_k": sum(r["precision_at_k"] for r in rows) / len(per_question),
        "mrr": mean_reciprocal_rank(r["reciprocal_rank"] for r in rows),
        "map": mean_average_precision(r["average_precision"] for r in rows),
        "per_question": per_question,
    }


def retrieval_rankings(
    questions: Sequence[Question],
    vector_index: VectorIndex,
    lexical_index: LexicalIndex,
    chunks: Mapping[str, Chunk],
    embedder_config: EmbedderConfig,
    ensemble_config: EnsembleConfig = EnsembleConfig(),
) -> dict[str, list[str]]:
    """Fused ranked chunk lists for each benchmark question."""
    rankings = {}
    for question in questions:
        contexts = retrieve(
            question.text,
            vector_index,
            lexical_index,
            chunks,
            embedder_config,
            ensemble_config,
        )
        rankings[question.question_id] = [c.chunk_id for c in contexts]
    return rankings


# -- semantic response scoring -------------------------------------------


@dataclass(frozen=True)
class SemanticScore:
    precision: float
    recall: float
    f1: float


def _greedy_side(
    side_tokens: list[str], other_tokens: list[str], vectors: dict[str, np.ndarray]
) -> float:
    """Mean over side_tokens of the best cosine against other_tokens.

    An exact string match scores 1.0 without touching float cosines, so
    identical texts produce exactly 1.0.
    """
    other_set = set(other_tokens)
    other_matrix = np.vstack([vectors[token] for token in other_tokens])
    total = 0.0
    for token in side_tokens:
        if token in other_set:
            total += 1.0
            continue
        best = float(np.max(other_matrix @ vectors[token]))
        total += max(-1.0, min(1.0, best))
    return total / len(side_tokens)


def semantic_score(
    candidate: str, reference: str, embedder_config: EmbedderConfig = EmbedderConfig()
) -> SemanticScore:
    """Greedy max-cosine token matching between candidate and reference.

    precision covers candidate tokens, recall covers reference tokens,
    f1 is their harmonic mean (0 when both are 0).  Swapping the two
    texts exchanges precision and recall exactly.
    """
    candidate_tokens = tokenize(candidate)
    reference_tokens = tokenize(reference)
    if not candidate_tokens or not reference_tokens:
        raise InvalidTextError("semantic_score needs tokenizable text on both sides")
    distinct = sorted(set(candidate_tokens) | set(reference_tokens))
    embedded = embed_batch(distinct, embedder_config)
    vectors = dict(zip(distinct, embedded))
    precision = _greedy_side(candidate_tokens, reference_tokens, vectors)
    recall = _greedy_side(reference_tokens, candidate_tokens, vectors)
    if precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return SemanticScore(precision=precision, recall=recall, f1=f1)


# -- human score aggregation ----------------------------------------------


def aggregate_human(
    scores: Iterable[HumanScore], questions: Sequence[Question]
) -> dict:
    """Mean ratings per config: across judges, then across questions.

    Output: config_id -> criterion -> {category..., Overall}, plus an
    "Average" pseudo-criterion holding the mean of the three criterion
    values per column.  Every (question, config) pair must have at
    least one judge; missing pairs are reported together.
    """
    scores = list(scores)
    if not scores:
        raise EvaluationError("no human scores supplied")
    category_of = {q.question_id: q.category for q in questions}
    unknown = sorted({s.question_id for s in scores} - set(category_of))
    if unknown:
        raise EvaluationError(f"scores reference unknown questions: {unknown}")
    config_ids = sorted({s.model_config_id for s in scores})
    by_cell: dict[tuple[str, str], list[HumanScore]] = {}
    for score in scores:
        by_cell.setdefault((score.model_config_id, score.question_id), []).append(score)
    missing = [
        (config_id, question.question_id)
        for config_id in config_ids
        for question in questions
        if (config_id, question.question_id) not in by_cell
    ]
    if missing:
        raise EvaluationError(f"missing human scores for: {missing}")
    result: dict[str, dict] = {}
    for config_id in config_ids:
        per_criterion: dict[str, dict[str, float]] = {}
        for criterion in CRITERIA:
            question_means = {
                question.question_id: _mean(
                    [
                        getattr(s, criterion)
                        for s in by_cell[(config_id, question.question_id)]
                    ]
                )
                for question in questions
            }
            columns = {}
            for category in CATEGORIES:
                in_category = [
                    question_means[q.question_id]
                    for q in questions
                    if q.category == category
                ]
                columns[category] = _mean(in_category) if in_category else None
            columns["Overall"] = _mean(list(question_means.values()))
            per_criterion[criterion] = columns
        per_criterion["Average"] = {
            column: _mean(
                [
                    per_criterion[criterion][column]
                    for criterion in CRITERIA
                    if per_criterion[criterion][column] is not None
                ]
            )
            if any(per_criterion[criterion][column] is not None for criterion in CRITERIA)
            else None
            for column in (*CATEGORIES, "Overall")
        }
        result[config_id] = per_criterion
    return result


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


# -- experiment runner ------------------------------------------------------


@dataclass
class ExperimentReport:
    """Tabulated semantic scores per config plus optional retrieval block.

    cells: config_id -> metric -> column -> mean (None when every
    underlying question failed); raw keeps the per-question records the
    aggregates were computed from.
    """

    config_ids: list[str]
    cells: dict[str, dict[str, dict[str, float | None]]]
    failed: dict[str, int]
    raw: list[dict]
    retrieval: dict | None = None
    word_limit: tuple[int, int] = DEFAULT_WORD_LIMIT


_SEMANTIC_METRICS = ("precision", "recall", "f1")


def run_experiment(
    questions: Sequence[Question],
    model_configs: Sequence[ModelConfig],
    *,
    chunks: Mapping[str, Chunk],
    lexical_index: LexicalIndex | None,
    vector_index: VectorIndex | None,
    embedder_config: EmbedderConfig,
    ensemble_config: EnsembleConfig = EnsembleConfig(),
    data_dir: str | Path,
    judgments: Iterable[RelevanceJudgment] | None = None,
    word_limit: tuple[int, int] | None = DEFAULT_WORD_LIMIT,
    k: int = DEFAULT_K,
) -> ExperimentReport:
    """Replay the question set through each configuration.

    Per config: one fresh session, every question posted consecutively
    in the given order under a word-limit persona; replies are scored
    against the reference answers.  A provider failure marks that cell
    failed and the run continues.  With judgments supplied, a retrieval
    block scores the fused rankings (retrieval is config-independent).
    """
    if not questions:
        raise EvaluationError("no questions to run")
    if not model_configs:
        raise EvaluationError("no model configurations to run")
    raw: list[dict] = []
    cells: dict[str, dict[str, dict[str, float | None]]] = {}
    failed_counts: dict[str, int] = {}
    for config in model_configs:
        service = ChatService(
            provider=config.provider,
            data_dir=data_dir,
            chunks=chunks,
            lexical_index=lexical_index,
            vector_index=vector_index,
            embedder_config=embedder_config,
            ensemble_config=ensemble_config,
        )
        persona = PersonaConfig(word_limit=word_limit)
        session = service.create_session(persona=persona, rag_enabled=config.rag_enabled)
        failures = 0
        for question in questions:
            record = {
                "config_id": config.config_id,
                "question_id": question.question_id,
                "category": question.category,
                "session_id": session.session_id,
                "failed": False,
                "reply": None,
                "contexts": [],
                "precision": None,
                "recall": None,
                "f1": None,
            }
            try:
                turn = service.post_message(session.session_id, question.text)
            except ProviderUnavailableError as exc:
                record["failed"] = True
                record["error"] = str(exc)
                failures += 1
                raw.append(record)
                continue
            score = semantic_score(turn.text, question.reference_answer, embedder_config)
            record["reply"] = turn.text
            record["contexts"] = [c["chunk_id"] for c in turn.contexts_used]
            record["latency_ms"] = turn.latency_ms
            record["precision"] = score.precision
            record["recall"] = score.recall
            record["f1"] = score.f1
            raw.append(record)
        cells[config.config_id] = aggregate_semantic_records(
            [r for r in raw if r["config_id"] == config.config_id]
        )
        failed_counts[config.config_id] = failures
    retrieval = None
    if judgments is not None:
        rankings = retrieval_rankings(
            questions, vector_index, lexical_index, chunks, embedder_config, ensemble_config
        )
        retrieval = evaluate_retrieval(rankings, judgments, k=k)
    return ExperimentReport(
        config_ids=[c.config_id for c in model_configs],
        cells=cells,
        failed=failed_counts,
        raw=raw,
        retrieval=retrieval,
        word_limit=word_limit if word_limit else DEFAULT_WORD_LIMIT,
    )


def aggregate_semantic_records(records: list[dict]) -> dict:
    """Mean semantic metrics per category column over question records."""
    columns: dict[str, dict[str, float | None]] = {}
    for metric in _SEMANTIC_METRICS:
        per_column: dict[str, float | None] = {}
        for category in CATEGORIES:
            values = [
                r[metric]
                for r in records
                if r["category"] == category and not r["failed"]
            ]
            per_column[category] = _mean(values) if values else None
        overall = [r[metric] for r in records if not r["failed"]]
        per_column["Overall"] = _mean(overall) if overall else None
        columns[metric] = per_column
    return columns


# -- report rendering -------------------------------------------------------


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "config_ids": report.config_ids,
        "word_limit": list(report.word_limit),
        "cells": report.cells,
        "failed": report.failed,
        "retrieval": report.retrieval,
        "raw": report.raw,
    }


def report_from_dict(data: dict) -> ExperimentReport:
    return ExperimentReport(
        config_ids=list(data["config_ids"]),
        cells=data["cells"],
        failed=data.get("failed", {}),
        raw=data.get("raw", []),
        retrieval=data.get("retrieval"),
        word_limit=tuple(data.get("word_limit", DEFAULT_WORD_LIMIT)),
    )


def _format_cell(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def render_semantic_table(report: ExperimentReport) -> str:
    """Aligned text table: one block per config, rows per metric."""
    columns = (*CATEGORIES, "Overall")
    width = max(len(c) for c in columns) + 2
    lines = []
    for config_id in report.config_ids:
        lines.append(f"semantic scores: {config_id}")
        header = "metric".ljust(12) + "".join(c.rjust(width) for c in columns)
        lines.append(header)
        for metric in _SEMANTIC_METRICS:
            row = metric.ljust(12)
            for column in columns:
                row += _format_cell(report.cells[config_id][metric][column]).rjust(width)
            lines.append(row)
        if report.failed.get(config_id):
            lines.append(f"failed questions: {report.failed[config_id]}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def render_retrieval_table(retrieval: dict) -> str:
    k = retrieval["k"]
    lines = [
        "retrieval metrics",
        f"Precision@{k}".ljust(14) + f"{retrieval['precision_at_k']:.3f}",
        "MRR".ljust(14) + f"{retrieval['mrr']:.3f}",
        "MAP".ljust(14) + f"{retrieval['map']:.3f}",
    ]
    return "\n".join(lines) + "\n"


def render_human_table(aggregates: dict) -> str:
    """Aligned table of aggregated 1-3 ratings per config."""
    columns = (*CATEGORIES, "Overall")
    width = max(len(c) for c in columns) + 2
    lines = []
    for config_id, per_criterion in aggregates.items():
        lines.append(f"human scores: {config_id}")
        lines.append("criterion".ljust(14) + "".join(c.rjust(width) for c in columns))
        for criterion in (*CRITERIA, "Average"):
            row = criterion.ljust(14)
            for column in columns:
                row += _format_cell(per_criterion[criterion][column]).rjust(width)
            lines.append(row)
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


# -- data files -------------------------------------------------------------


def load_questions(path: str | Path) -> list[Question]:
    """Read the benchmark question file (JSON array)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise EvaluationError(f"questions file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise EvaluationError(f"questions file is not valid JSON: {path}: {exc}") from exc
    if not isinstance(data, list):
        raise EvaluationError(f"questions file must hold a JSON array: {path}")
    questions = []
    seen = set()
    for item in data:
        try:
            question = Question(
                question_id=item["question_id"],
                text=item["text"],
                category=item["category"],
                reference_answer=item["reference_answer"],
                has_known_answer_in_corpus=bool(
                    item.get("has_known_answer_in_corpus", False)
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EvaluationError(f"bad question record in {path}: {exc}") from exc
        if question.question_id in seen:
            raise EvaluationError(f"duplicate question_id: {question.question_id}")
        seen.add(question.question_id)
        questions.append(question)
    return questions


def load_judgments(path: str | Path) -> list[RelevanceJudgment]:
    """Read relevance judgments (CSV: question_id,chunk_id,relevant,judge_id)."""
    try:
        handle = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise EvaluationError(f"judgments file not found: {path}") from None
    judgments = []
    seen: set[tuple[str, str, str]] = set()
    with handle:
        reader = csv.DictReader(handle)
        required = {"question_id", "chunk_id", "relevant", "judge_id"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise EvaluationError(f"judgments file missing columns: {path}")
        for row in reader:
            key = (row["question_id"], row["chunk_id"], row["judge_id"])
            if key in seen:
                raise EvaluationError(f"duplicate judgment for {key}")
            seen.add(key)
            if row["relevant"] not in ("0", "1"):
                raise EvaluationError(
                    f"relevant must be 0 or 1, got {row['relevant']!r}"
                )
            judgments.append(
                RelevanceJudgment(
                    question_id=row["question_id"],
                    chunk_id=row["chunk_id"],
                    relevant=row["relevant"] == "1",
                    judge_id=row["judge_id"],
                )
            )
    return judgments


def load_human_scores(path: str | Path) -> list[HumanScore]:
    """Read expert ratings (CSV with 1-3 scores per criterion)."""
    try:
        handle = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise EvaluationError(f"human scores file not found: {path}") from None
    scores = []
    with handle:
        reader = csv.DictReader(handle)
        required = {"question_id", "model_config_id", *CRITERIA, "judge_id"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise EvaluationError(f"human scores file missing columns: {path}")
        for row in reader:
            try:
                scores.append(
                    HumanScore(
                        question_id=row["question_id"],
                        model_config_id=row["model_config_id"],
                        relevance=int(row["relevance"]),
                        accuracy=int(row["accuracy"]),
                        completeness=int(row["completeness"]),
                        judge_id=row["judge_id"],
                    )
                )
            except ValueError as exc:
                raise EvaluationError(f"bad human score row: {exc}") from exc
    return scores
