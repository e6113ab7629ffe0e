"""Release acceptance suite: one test per criterion, run with -v for the
pass/fail checklist.

Each test restates its tolerance inline and, where the check is numeric,
derives the expected values from an independent brute-force implementation
written here rather than from the module under test.
"""

import json
import math
import os
import random
import socket
import subprocess
import sys
import time
from pathlib import Path

import requests

from essence_coach.cli import main
from essence_coach.embedding import EmbedderConfig, embed_text
from essence_coach.ensemble import EnsembleConfig, retrieve
from essence_coach.evaluation import (
    ModelConfig,
    average_precision,
    evaluate_retrieval,
    precision_at_k,
    reciprocal_rank,
    retrieval_rankings,
    run_experiment,
    semantic_score,
)
from essence_coach.lexical import build_lexical_index, bm25_score, search_lexical
from essence_coach.vector import build_vector_index, search_vector
from tests.conftest import DATA_DIR, make_chunk


# -- criterion 1: ranking metrics agree with a brute-force oracle ------------


def _oracle_precision(ranked, relevant, k):
    hits = 0
    for item in ranked[:k]:
        if item in relevant:
            hits += 1
    return hits / k


def _oracle_reciprocal_rank(ranked, relevant):
    position = 0
    for item in ranked:
        position += 1
        if item in relevant:
            return 1.0 / position
    return 0.0


def _oracle_average_precision(ranked, relevant):
    hits = 0
    total = 0.0
    position = 0
    for item in ranked:
        position += 1
        if item in relevant:
            hits += 1
            total += hits / position
    return total / hits if hits else 0.0


def test_ranking_metrics_match_brute_force_oracle():
    rng = random.Random(20260814)
    universe = [f"c{i}" for i in range(12)]
    start = time.perf_counter()
    for _ in range(100):
        ranked = rng.sample(universe, rng.randint(1, 10))
        relevant = {item for item in universe if rng.random() < 0.4}
        k = rng.randint(1, 10)
        assert abs(
            precision_at_k(ranked, relevant, k) - _oracle_precision(ranked, relevant, k)
        ) < 1e-9
        assert abs(
            reciprocal_rank(ranked, relevant) - _oracle_reciprocal_rank(ranked, relevant)
        ) < 1e-9
        assert abs(
            average_precision(ranked, relevant) - _oracle_average_precision(ranked, relevant)
        ) < 1e-9
    assert time.perf_counter() - start < 1.0


# -- criterion 2: benchmark metrics on the shipped corpus --------------------


def test_benchmark_metrics_on_shipped_corpus(
    corpus_chunks, corpus_chunk_map, corpus_lexical, corpus_vector, hashed_config,
    questions, judgments,
):
    """With the deterministic hashed backend the published operating point
    does not apply; the metrics must still all be computable and in [0, 1].
    Set ESSENCE_COACH_EMBED_ENDPOINT to a live 384-dim sentence-embedding
    service to additionally check the published numbers at +/-0.10."""
    rankings = retrieval_rankings(
        questions, corpus_vector, corpus_lexical, corpus_chunk_map, hashed_config
    )
    result = evaluate_retrieval(rankings, judgments, k=4)
    for name in ("precision_at_k", "mrr", "map"):
        value = result[name]
        assert isinstance(value, float) and math.isfinite(value)
        assert 0.0 <= value <= 1.0
    assert len(result["per_question"]) == 30
    print(
        f"hashed backend: P@4={result['precision_at_k']:.4f} "
        f"MRR={result['mrr']:.4f} MAP={result['map']:.4f}"
    )
    endpoint = os.environ.get("ESSENCE_COACH_EMBED_ENDPOINT")
    if endpoint:
        config = EmbedderConfig(backend="external", dim=384, endpoint=endpoint)
        vector = build_vector_index(corpus_chunks, config)
        rankings = retrieval_rankings(
            questions, vector, corpus_lexical, corpus_chunk_map, config
        )
        result = evaluate_retrieval(rankings, judgments, k=4)
        assert abs(result["precision_at_k"] - 0.731) <= 0.10
        assert abs(result["mrr"] - 0.653) <= 0.10
        assert abs(result["map"] - 0.769) <= 0.10


# -- criterion 3: default chunking stays inside the anchor band --------------


def test_default_chunking_lands_in_anchor_band(tmp_path, capsys):
    out = tmp_path / "chunks.jsonl"
    start = time.perf_counter()
    code = main(
        [
            "ingest",
            "--manifest",
            str(DATA_DIR / "corpus_manifest.json"),
            "--out",
            str(out),
            "--json",
        ]
    )
    elapsed = time.perf_counter() - start
    assert code == 0
    count = json.loads(capsys.readouterr().out)["chunks"]
    # 461 +/- 15%
    assert 392 <= count <= 530, f"chunk count {count} outside 392..530"
    assert elapsed < 5.0


# -- criterion 4: BM25 matches the hand-evaluated formula --------------------

BM25_DOCS = {
    "d1": "apple banana apple",
    "d2": "banana cherry",
    "d3": "cherry date elderberry",
    "d4": "apple cherry cherry cherry",
    "d5": "fig",
}


def _bm25_expected(tf, doc_len, df, n_docs=5, avgdl=2.6, k1=1.2, b=0.75):
    idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
    return idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc_len / avgdl))


def test_bm25_scores_match_hand_evaluated_formula():
    chunks = [make_chunk(cid, body) for cid, body in BM25_DOCS.items()]
    index = build_lexical_index(chunks)
    doc_lens = {cid: len(body.split()) for cid, body in BM25_DOCS.items()}
    doc_freq = {}
    for body in BM25_DOCS.values():
        for term in set(body.split()):
            doc_freq[term] = doc_freq.get(term, 0) + 1
    for cid, body in BM25_DOCS.items():
        for term in set(body.split()):
            expected = _bm25_expected(body.split().count(term), doc_lens[cid], doc_freq[term])
            assert abs(bm25_score(index, [term], cid) - expected) < 1e-9
    # Worked single-document case: tf=1, dl=avgdl=1, df=1, N=1 collapses the
    # score to the bare idf, ln(4/3).
    single = build_lexical_index([make_chunk("solo", "apple")])
    got = bm25_score(single, ["apple"], "solo")
    assert abs(got - 0.2876820724517809) < 1e-9


# -- criterion 5: ensemble size and membership invariants --------------------

_VOCAB = ("alpha", "beta", "card", "state", "team", "work", "poker", "retro")


def test_ensemble_size_and_membership_invariants():
    rng = random.Random(424242)
    config = EmbedderConfig()
    ensemble = EnsembleConfig()
    full_list_cases = 0
    overlap_cases = 0
    for corpus_round in range(10):
        bodies = {
            f"r{corpus_round}-{i:02d}": " ".join(rng.choices(_VOCAB, k=rng.randint(3, 10)))
            for i in range(rng.randint(5, 50))
        }
        chunks = [make_chunk(cid, body) for cid, body in bodies.items()]
        lookup = {c.chunk_id: c for c in chunks}
        lexical = build_lexical_index(chunks)
        vector = build_vector_index(chunks, config)
        for _ in range(20):
            query = " ".join(rng.choices(_VOCAB, k=rng.randint(1, 4)))
            got = retrieve(query, vector, lexical, lookup, config, ensemble)
            assert len(got) <= 4
            assert got == retrieve(query, vector, lexical, lookup, config, ensemble)
            vec_ids = [
                cid
                for cid, _ in search_vector(
                    vector, embed_text(query, config), ensemble.k_each
                )
            ]
            lex_ids = [
                cid for cid, _ in search_lexical(lexical, query, ensemble.k_each)
            ]
            assert {c.chunk_id for c in got} == set(vec_ids) | set(lex_ids)
            for context in got:
                assert ("vector" in context.sources) == (context.chunk_id in vec_ids)
                assert ("lexical" in context.sources) == (context.chunk_id in lex_ids)
            if len(vec_ids) == 2 and len(lex_ids) == 2:
                full_list_cases += 1
                overlap = bool(set(vec_ids) & set(lex_ids))
                assert (len(got) < 4) == overlap
                overlap_cases += overlap
    assert full_list_cases >= 150  # the iff clause was actually exercised
    assert overlap_cases >= 10
    # Crafted duplicate-overlap case: two near-identical chunks win both
    # methods, so exactly two contexts come back.
    bodies = {
        "z0": "zzqq zzqq zzqq",
        "z1": "zzqq zzqq qqzz",
        "z2": "other words here",
        "z3": "more unrelated text",
    }
    chunks = [make_chunk(cid, body) for cid, body in bodies.items()]
    lookup = {c.chunk_id: c for c in chunks}
    got = retrieve(
        "zzqq", build_vector_index(chunks, config), build_lexical_index(chunks),
        lookup, config, ensemble,
    )
    assert [c.chunk_id for c in got] == ["z0", "z1"]
    assert all(c.sources == frozenset({"lexical", "vector"}) for c in got)


# -- criterion 6: chat service answers the full benchmark in one session -----


def _free_port():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def test_chat_service_answers_thirty_questions_end_to_end(
    tmp_path, questions, corpus_chunk_map, corpus_lexical, corpus_vector, hashed_config
):
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "manifest": str(DATA_DIR / "corpus_manifest.json"),
                "data_dir": "var",
                "chunks_file": "var/chunks.jsonl",
                "index_dir": "var/index",
            }
        ),
        encoding="utf-8",
    )
    assert main(["--config", str(config_path), "ingest"]) == 0
    assert main(["--config", str(config_path), "index"]) == 0

    # Retrieval latency, measured directly against the full corpus indexes.
    for question in questions:
        tick = time.perf_counter()
        contexts = retrieve(
            question.text, corpus_vector, corpus_lexical, corpus_chunk_map, hashed_config
        )
        assert time.perf_counter() - tick < 0.1
        assert 2 <= len(contexts) <= 4

    port = _free_port()
    proc = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "essence_coach.cli",
            "--config",
            str(config_path),
            "serve",
            "--host",
            "127.0.0.1",
            "--port",
            str(port),
        ],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
        cwd=str(tmp_path),
    )
    base = f"http://127.0.0.1:{port}"
    try:
        deadline = time.monotonic() + 20.0
        while True:
            try:
                health = requests.get(f"{base}/api/health", timeout=2).json()
                if health["index_ready"]:
                    break
            except requests.ConnectionError:
                pass
            assert time.monotonic() < deadline, "service did not become ready"
            time.sleep(0.2)
        assert health["corpus_chunks"] == 461

        created = requests.post(f"{base}/api/sessions", json={}, timeout=5)
        assert created.status_code == 201
        session_id = created.json()["session_id"]

        start = time.perf_counter()
        for question in questions:
            reply = requests.post(
                f"{base}/api/sessions/{session_id}/messages",
                json={"text": question.text},
                timeout=10,
            )
            assert reply.status_code == 200
            body = reply.json()
            assert 2 <= len(body["contexts"]) <= 4
            assert body["reply"]
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"30-question run took {elapsed:.2f}s"

        transcript = requests.get(f"{base}/api/sessions/{session_id}", timeout=5).json()
        history = transcript["turns"]
        assert len(history) == 60
        assert [t["speaker"] for t in history] == ["user", "assistant"] * 30
        for turn in history:
            if turn["speaker"] == "assistant":
                assert 2 <= len(turn["contexts"]) <= 4
                assert turn["contexts"][0]["chunk_id"] in corpus_chunk_map
    finally:
        proc.terminate()
        proc.wait(timeout=10)


# -- criterion 7: semantic scorer identity, symmetry, and bounds -------------


def test_semantic_scorer_identity_symmetry_and_bounds():
    config = EmbedderConfig()
    text = "the team assesses each alpha state with evidence based checklists"
    identical = semantic_score(text, text, config)
    assert identical.f1 == 1.0
    assert identical.precision == 1.0 and identical.recall == 1.0

    vocab = (
        "alpha state team work card checklist practice kernel coach evidence "
        "sprint retro poker planning progress seriousness stakeholder opportunity"
    ).split()
    rng = random.Random(77)
    for _ in range(100):
        left = " ".join(rng.choices(vocab, k=rng.randint(2, 12)))
        right = " ".join(rng.choices(vocab, k=rng.randint(2, 12)))
        forward = semantic_score(left, right, config)
        backward = semantic_score(right, left, config)
        assert abs(forward.precision - backward.recall) < 1e-12
        assert abs(forward.recall - backward.precision) < 1e-12
        if forward.precision + forward.recall > 0:
            harmonic = (
                2 * forward.precision * forward.recall
                / (forward.precision + forward.recall)
            )
            assert abs(forward.f1 - harmonic) < 1e-12
            assert forward.f1 <= max(forward.precision, forward.recall) + 1e-12
            assert min(forward.precision, forward.recall) - 1e-12 <= forward.f1


# -- criterion 8: experiment report fills every cell with the mock provider --


def test_experiment_report_fills_every_cell_with_mock(
    tmp_path, questions, judgments, corpus_chunk_map, corpus_lexical, corpus_vector,
    hashed_config, mock_provider,
):
    report = run_experiment(
        questions,
        [
            ModelConfig("mock-rag", mock_provider, True),
            ModelConfig("mock-norag", mock_provider, False),
        ],
        chunks=corpus_chunk_map,
        lexical_index=corpus_lexical,
        vector_index=corpus_vector,
        embedder_config=hashed_config,
        data_dir=tmp_path / "experiments",
        judgments=judgments,
    )
    for config_id in ("mock-rag", "mock-norag"):
        assert report.failed[config_id] == 0
        rows = [r for r in report.raw if r["config_id"] == config_id]
        assert len(rows) == 30
        for metric in ("precision", "recall", "f1"):
            for column in ("Information", "DecisionMaking", "Translation", "Overall"):
                assert report.cells[config_id][metric][column] is not None
            recomputed = sum(r[metric] for r in rows) / len(rows)
            assert abs(report.cells[config_id][metric]["Overall"] - recomputed) < 1e-9
    assert report.retrieval is not None
