"""Retrieval-augmented coaching assistant for the Essence standard.

The package is organised around a small pipeline: a Markdown corpus is
split into heading-delimited chunks, indexed both lexically (BM25) and
semantically (embedding vectors), queried through an ensemble retriever,
and the retrieved contexts are folded into chat-completion prompts.  An
evaluation harness measures retrieval quality (Precision@K, MRR, MAP),
semantic response similarity, and aggregates human judgments.
"""

__version__ = "0.1.0"
