"""Operator command line: ingest, index, ask, serve, and evaluations.

Exit codes: 0 success, 1 usage error, 2 data/configuration error,
3 provider or transport error.  Commands are idempotent on unchanged
inputs; snapshot files are rewritten byte-identically for the
deterministic backends.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import AppConfig, ConfigError, apply_overrides, load_config
from .corpus import (
    ChunkPolicy,
    CorpusError,
    chunk_corpus,
    chunk_map,
    load_chunks,
    load_corpus,
    save_chunks,
)
from .embedding import EmbedderConfig, EmbeddingTransportError, InvalidTextError
from .ensemble import EnsembleConfig, RetrievalError, retrieve
from .evaluation import (
    EvaluationError,
    ExperimentReport,
    ModelConfig,
    aggregate_semantic_records,
    evaluate_retrieval,
    load_judgments,
    load_questions,
    render_retrieval_table,
    render_semantic_table,
    report_to_dict,
    retrieval_rankings,
    run_experiment,
    semantic_score,
)
from .generation import (
    GenerationError,
    PersonaConfig,
    ProviderConfigError,
    assemble_prompt,
    complete,
)
from .lexical import (
    LexicalIndexError,
    build_lexical_index,
    load_lexical_index,
    save_lexical_index,
)
from .service import ChatService, ProviderUnavailableError, create_app
from .vector import (
    VectorIndexError,
    build_vector_index,
    load_vector_index,
    save_vector_index,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3

LEXICAL_SNAPSHOT = "lexical.json"
VECTOR_SNAPSHOT = "vectors.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting itself."""

    def error(self, message):
        raise UsageError(message)


def _split_levels(text: str) -> frozenset[int]:
    try:
        return frozenset(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise UsageError(f"bad --split-levels value: {text!r}") from None


def _app_config(args) -> AppConfig:
    config = load_config(args.config) if args.config else AppConfig()
    overrides = {}
    if getattr(args, "manifest", None):
        overrides["manifest"] = Path(args.manifest)
    if getattr(args, "chunks", None):
        overrides["chunks_file"] = Path(args.chunks)
    if getattr(args, "index_dir", None):
        overrides["index_dir"] = Path(args.index_dir)
    if getattr(args, "questions", None):
        overrides["questions"] = Path(args.questions)
    if getattr(args, "judgments", None):
        overrides["judgments"] = Path(args.judgments)
    if getattr(args, "data_dir", None):
        overrides["data_dir"] = Path(args.data_dir)
    if getattr(args, "host", None):
        overrides["host"] = args.host
    if getattr(args, "port", None):
        overrides["port"] = args.port
    config = apply_overrides(config, **overrides)
    if getattr(args, "max_chars", None) or getattr(args, "min_chars", None) is not None or getattr(args, "split_levels", None):
        policy = config.chunk_policy
        config.chunk_policy = ChunkPolicy(
            split_levels=_split_levels(args.split_levels)
            if getattr(args, "split_levels", None)
            else policy.split_levels,
            max_chars=args.max_chars if getattr(args, "max_chars", None) else policy.max_chars,
            min_chars=args.min_chars
            if getattr(args, "min_chars", None) is not None
            else policy.min_chars,
        )
    if getattr(args, "backend", None) or getattr(args, "dim", None) or getattr(args, "endpoint", None):
        embedder = config.embedder
        config.embedder = EmbedderConfig(
            backend=args.backend or embedder.backend,
            dim=args.dim or embedder.dim,
            endpoint=args.endpoint or embedder.endpoint,
            model_name=embedder.model_name,
            timeout=embedder.timeout,
        )
    if getattr(args, "k_each", None):
        ensemble = config.ensemble
        config.ensemble = EnsembleConfig(
            k_each=args.k_each,
            weight_vector=ensemble.weight_vector,
            weight_lexical=ensemble.weight_lexical,
            normalization_pool=max(ensemble.normalization_pool, args.k_each),
        )
    return config


def _load_runtime(config: AppConfig):
    chunks = load_chunks(config.chunks_file)
    lexical = load_lexical_index(Path(config.index_dir) / LEXICAL_SNAPSHOT)
    vector = load_vector_index(Path(config.index_dir) / VECTOR_SNAPSHOT)
    return chunk_map(chunks), lexical, vector


def cmd_ingest(args) -> int:
    config = _app_config(args)
    corpus = load_corpus(config.manifest)
    chunks = chunk_corpus(corpus, config.chunk_policy)
    out = Path(args.out) if args.out else Path(config.chunks_file)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_chunks(chunks, out)
    if args.json:
        print(json.dumps({"chunks": len(chunks), "out": str(out)}))
    else:
        print(f"{len(chunks)} chunks written to {out}")
    return EXIT_OK


def cmd_index(args) -> int:
    config = _app_config(args)
    chunks = load_chunks(config.chunks_file)
    index_dir = Path(args.out) if args.out else Path(config.index_dir)
    index_dir.mkdir(parents=True, exist_ok=True)
    lexical = build_lexical_index(chunks)
    save_lexical_index(lexical, index_dir / LEXICAL_SNAPSHOT)
    vector = build_vector_index(chunks, config.embedder)
    save_vector_index(vector, index_dir / VECTOR_SNAPSHOT)
    if args.json:
        print(
            json.dumps(
                {
                    "chunks": len(chunks),
                    "lexical_terms": len(lexical.postings),
                    "vector_dim": vector.dim,
                    "index_dir": str(index_dir),
                }
            )
        )
    else:
        print(
            f"indexed {len(chunks)} chunks: {len(lexical.postings)} terms, "
            f"{vector.size} vectors (dim {vector.dim}) -> {index_dir}"
        )
    return EXIT_OK


def cmd_ask(args) -> int:
    config = _app_config(args)
    chunks, lexical, vector = _load_runtime(config)
    provider = config.provider(args.provider)
    contexts = []
    if args.rag:
        contexts = retrieve(
            args.query, vector, lexical, chunks, config.embedder, config.ensemble
        )
    persona = PersonaConfig()
    request = assemble_prompt(
        args.query,
        contexts,
        persona,
        args.rag,
        model_name=provider.model_name,
        provider_id=provider.provider_id,
        system_prompt_text=config.system_prompt_text(),
    )
    response = complete(request, provider)
    if args.json:
        print(
            json.dumps(
                {
                    "answer": response.text,
                    "latency_ms": response.latency_s * 1000.0,
                    "contexts": [
                        {
                            "chunk_id": c.chunk_id,
                            "doc_id": c.chunk.doc_id,
                            "heading_path": list(c.chunk.heading_path),
                            "fused_score": c.fused_score,
                            "rank": c.rank,
                        }
                        for c in contexts
                    ],
                }
            )
        )
        return EXIT_OK
    print(response.text)
    if contexts:
        print()
        print("sources:")
        for c in contexts:
            path = " > ".join(c.chunk.heading_path)
            print(f"  {c.rank}. {c.chunk.doc_id} / {path} (score {c.fused_score:.3f})")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    config = _app_config(args)
    chunks = {}
    lexical = None
    vector = None
    try:
        chunks, lexical, vector = _load_runtime(config)
    except (FileNotFoundError, CorpusError, LexicalIndexError, VectorIndexError):
        print("warning: index snapshots not loaded; service starts not ready", file=sys.stderr)
    ui_dir = Path(args.ui_dir) if args.ui_dir else None
    if ui_dir is not None and not ui_dir.is_dir():
        raise ConfigError(f"ui directory not found: {ui_dir}")
    service = ChatService(
        provider=config.provider(args.provider),
        data_dir=config.data_dir,
        chunks=chunks,
        lexical_index=lexical,
        vector_index=vector,
        embedder_config=config.embedder,
        ensemble_config=config.ensemble,
        system_prompt_text=config.system_prompt_text(),
    )
    app = create_app(service, ui_dir=ui_dir)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return EXIT_OK


def cmd_eval_retrieval(args) -> int:
    config = _app_config(args)
    questions = load_questions(config.questions)
    judgments = load_judgments(config.judgments)
    chunks, lexical, vector = _load_runtime(config)
    rankings = retrieval_rankings(
        questions, vector, lexical, chunks, config.embedder, config.ensemble
    )
    result = evaluate_retrieval(rankings, judgments, k=args.k)
    if args.json:
        print(json.dumps(result, indent=2))
    else:
        print(render_retrieval_table(result), end="")
    return EXIT_OK


def cmd_eval_responses(args) -> int:
    config = _app_config(args)
    questions = load_questions(config.questions)
    by_id = {q.question_id: q for q in questions}
    try:
        data = json.loads(Path(args.transcripts).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise EvaluationError(f"transcripts file not found: {args.transcripts}") from None
    except json.JSONDecodeError as exc:
        raise EvaluationError(f"transcripts file is not valid JSON: {exc}") from exc
    records = data["raw"] if isinstance(data, dict) else data
    rescored = []
    for record in records:
        question = by_id.get(record.get("question_id"))
        if question is None:
            raise EvaluationError(
                f"transcript references unknown question: {record.get('question_id')}"
            )
        row = dict(record)
        row.setdefault("category", question.category)
        if not row.get("failed") and row.get("reply"):
            score = semantic_score(row["reply"], question.reference_answer, config.embedder)
            row["precision"] = score.precision
            row["recall"] = score.recall
            row["f1"] = score.f1
        else:
            row["failed"] = True
        rescored.append(row)
    config_ids = sorted({row["config_id"] for row in rescored})
    report = ExperimentReport(
        config_ids=config_ids,
        cells={
            config_id: aggregate_semantic_records(
                [r for r in rescored if r["config_id"] == config_id]
            )
            for config_id in config_ids
        },
        failed={
            config_id: sum(
                1 for r in rescored if r["config_id"] == config_id and r.get("failed")
            )
            for config_id in config_ids
        },
        raw=rescored,
    )
    if args.json:
        print(json.dumps(report_to_dict(report), indent=2))
    else:
        print(render_semantic_table(report), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    config = _app_config(args)
    questions = load_questions(config.questions)
    judgments = None
    if Path(config.judgments).exists():
        judgments = load_judgments(config.judgments)
    chunks, lexical, vector = _load_runtime(config)
    provider_ids = (
        [p.strip() for p in args.providers.split(",") if p.strip()]
        if args.providers
        else [config.default_provider]
    )
    model_configs = []
    for provider_id in provider_ids:
        provider = config.provider(provider_id)
        model_configs.append(ModelConfig(f"{provider_id}-rag", provider, True))
        model_configs.append(ModelConfig(f"{provider_id}-norag", provider, False))
    report = run_experiment(
        questions,
        model_configs,
        chunks=chunks,
        lexical_index=lexical,
        vector_index=vector,
        embedder_config=config.embedder,
        ensemble_config=config.ensemble,
        data_dir=Path(config.data_dir) / "experiments",
        judgments=judgments,
    )
    payload = report_to_dict(report)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(render_semantic_table(report), end="")
        if report.retrieval is not None:
            print()
            print(render_retrieval_table(report.retrieval), end="")
        if args.out:
            print(f"\nreport written to {args.out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="essence-coach", description=__doc__)
    parser.add_argument("--config", help="path to the JSON config file")
    sub = parser.add_subparsers(dest="command", metavar="command")

    ingest = sub.add_parser("ingest", help="chunk the corpus into a chunk store")
    ingest.add_argument("--manifest", help="corpus manifest JSON")
    ingest.add_argument("--out", help="chunk store output path")
    ingest.add_argument("--max-chars", type=int)
    ingest.add_argument("--min-chars", type=int)
    ingest.add_argument("--split-levels", help="comma-separated heading levels, e.g. 1,2")
    ingest.add_argument("--json", action="store_true")
    ingest.set_defaults(func=cmd_ingest)

    index = sub.add_parser("index", help="build lexical and vector snapshots")
    index.add_argument("--chunks", help="chunk store path")
    index.add_argument("--out", help="index output directory")
    index.add_argument("--backend", choices=("hashed", "external"))
    index.add_argument("--dim", type=int)
    index.add_argument("--endpoint", help="external embedding endpoint URL")
    index.add_argument("--json", action="store_true")
    index.set_defaults(func=cmd_index)

    ask = sub.add_parser("ask", help="answer one question")
    ask.add_argument("query")
    ask.add_argument("--rag", action=argparse.BooleanOptionalAction, default=True)
    ask.add_argument("--provider", help="provider id from config")
    ask.add_argument("--chunks", help="chunk store path")
    ask.add_argument("--index-dir", help="index snapshot directory")
    ask.add_argument("--k-each", type=int, help="per-method candidate count")
    ask.add_argument("--json", action="store_true")
    ask.set_defaults(func=cmd_ask)

    serve = sub.add_parser("serve", help="run the chat HTTP service")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.add_argument("--provider")
    serve.add_argument("--chunks")
    serve.add_argument("--index-dir")
    serve.add_argument("--data-dir")
    serve.add_argument("--ui-dir", help="static directory with the built web client")
    serve.set_defaults(func=cmd_serve)

    eval_retrieval = sub.add_parser(
        "eval-retrieval", help="score retrieval against relevance judgments"
    )
    eval_retrieval.add_argument("--questions")
    eval_retrieval.add_argument("--judgments")
    eval_retrieval.add_argument("--chunks")
    eval_retrieval.add_argument("--index-dir")
    eval_retrieval.add_argument("--k", type=int, default=4)
    eval_retrieval.add_argument("--json", action="store_true")
    eval_retrieval.set_defaults(func=cmd_eval_retrieval)

    eval_responses = sub.add_parser(
        "eval-responses", help="semantic-score transcripts against references"
    )
    eval_responses.add_argument("--transcripts", required=True)
    eval_responses.add_argument("--questions")
    eval_responses.add_argument("--json", action="store_true")
    eval_responses.set_defaults(func=cmd_eval_responses)

    report = sub.add_parser("report", help="run the experiment and emit the report")
    report.add_argument("--questions")
    report.add_argument("--judgments")
    report.add_argument("--chunks")
    report.add_argument("--index-dir")
    report.add_argument("--data-dir")
    report.add_argument("--providers", help="comma-separated provider ids")
    report.add_argument("--out", help="write the JSON report here")
    report.add_argument("--json", action="store_true")
    report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EmbeddingTransportError, RetrievalError, ProviderUnavailableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except ProviderConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (
        CorpusError,
        LexicalIndexError,
        VectorIndexError,
        EvaluationError,
        ConfigError,
        InvalidTextError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
