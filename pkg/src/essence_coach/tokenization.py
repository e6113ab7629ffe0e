"""Shared tokenizer: lowercase, split on non-alphanumeric boundaries.

The same tokenizer is used for BM25 documents, BM25 queries, the hashed
reference embedder, and token-level semantic scoring, so that lexical and
semantic views of a text never disagree about what a "word" is.  No
stemming and no stopword removal: domain terms such as "alpha", "work"
and "state" are short common words that both would mangle.
"""

import re

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Split text into lowercase alphanumeric tokens, in order."""
    return _TOKEN.findall(text.lower())
