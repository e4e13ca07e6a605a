"""Candidate-pool construction and classical pseudo-relevance-feedback reformulators."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .embeddings import EmbeddingTable, PAD_TOKEN, cosine_similarity, query_embedding
from .index import DIRICHLET_U, InvertedIndex, SearchResult, lm_prob, lm_query_likelihood, search

CONTEXT_RADIUS = 4
# Paper-scale grid defaults; desk-scale configs override these.
PRF_DEFAULT_M = 300
PRF_DEFAULT_K = 9
POOL_DEFAULT_M = 300
POOL_DEFAULT_K = 7


@dataclass(frozen=True)
class CandidateTerm:
    """A pool entry: token, its context window, and where it came from.

    `source` is the originating doc id, or None for original query terms.
    The window has length 2*radius + 1 with pad tokens at the boundaries.
    """

    token: str
    context: tuple[str, ...]
    source: int | None
    pool_index: int


@dataclass
class CandidatePool:
    terms: list[CandidateTerm]
    m: int
    k: int

    def __len__(self) -> int:
        return len(self.terms)

    def tokens(self) -> list[str]:
        return [t.token for t in self.terms]


def _windows(tokens, radius: int):
    padded = [PAD_TOKEN] * radius + list(tokens) + [PAD_TOKEN] * radius
    for i in range(len(tokens)):
        yield tuple(padded[i : i + 2 * radius + 1])


def build_pool(
    query_tokens,
    results: SearchResult,
    corpus: Corpus,
    m: int = POOL_DEFAULT_M,
    k: int = POOL_DEFAULT_K,
    radius: int = CONTEXT_RADIUS,
) -> CandidatePool:
    """Query terms followed by the first m words of each of the top-k documents.

    Duplicates are kept; dropping them is the selection model's job.
    """
    if m < 1 or k < 1:
        raise ValueError(f"m and k must be >= 1, got m={m} k={k}")
    terms: list[CandidateTerm] = []
    for tok, win in zip(query_tokens, _windows(query_tokens, radius)):
        terms.append(CandidateTerm(token=tok, context=win, source=None, pool_index=len(terms)))
    for doc_id, _ in results.pairs[:k]:
        tokens = corpus[doc_id].tokens
        for tok, win in list(zip(tokens, _windows(tokens, radius)))[:m]:
            terms.append(CandidateTerm(token=tok, context=win, source=doc_id, pool_index=len(terms)))
    return CandidatePool(terms=terms, m=m, k=k)


def sample_feedback_doc(results: SearchResult, k: int, rng: np.random.Generator) -> int:
    """Uniform draw from the top-min(k, len) retrieved documents."""
    if not results:
        raise ValueError("cannot sample from empty results")
    top = results.pairs[: min(k, len(results))]
    return int(top[int(rng.integers(len(top)))][0])


def prf_tfidf(query_tokens, index: InvertedIndex, corpus: Corpus, n: int, k: int) -> list[str]:
    """Append each top-k document's n highest-TF-IDF terms to the query.

    TF-IDF(t, d) = tf(t, d) * ln(N / df(t)); within-document ties break by
    first occurrence.
    """
    if n < 1 or k < 1:
        raise ValueError(f"n and k must be >= 1, got n={n} k={k}")
    out = list(query_tokens)
    for doc_id, _ in search(index, query_tokens, k).pairs:
        tokens = corpus[doc_id].tokens
        first_pos: dict[str, int] = {}
        counts = Counter(tokens)
        for pos, tok in enumerate(tokens):
            first_pos.setdefault(tok, pos)
        scored = sorted(
            counts,
            key=lambda t: (-counts[t] * math.log(index.n_docs / index.df(t)), first_pos[t]),
        )
        out.extend(scored[:n])
    return out


def prf_rm_scores(
    query_tokens,
    index: InvertedIndex,
    corpus: Corpus,
    k: int,
    lam: float = 0.5,
    u: float = DIRICHLET_U,
) -> dict[str, float]:
    """Relevance-model term scores over q0 plus the terms of the top-k documents.

    P(t|q0) = (1-lam) * tf(t in q0)/|q0|
            + lam * sum_d (1/|D0|) * P(t|d) * P(q0|d)
    with Dirichlet-smoothed document language models.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    results = search(index, query_tokens, k)
    q_counts = Counter(query_tokens)
    candidates = set(query_tokens)
    for doc_id, _ in results.pairs:
        candidates.update(corpus[doc_id].tokens)
    scores: dict[str, float] = {}
    doc_weight = []
    if results:
        p_d = 1.0 / len(results)
        doc_weight = [
            (doc_id, p_d * lm_query_likelihood(index, query_tokens, doc_id, u))
            for doc_id, _ in results.pairs
        ]
    for term in candidates:
        score = (1.0 - lam) * q_counts.get(term, 0) / len(query_tokens)
        score += lam * sum(w * lm_prob(index, term, doc_id, u) for doc_id, w in doc_weight)
        scores[term] = score
    return scores


def prf_rm(
    query_tokens,
    index: InvertedIndex,
    corpus: Corpus,
    n: int,
    k: int,
    lam: float = 0.5,
    u: float = DIRICHLET_U,
) -> list[str]:
    """Append the n candidate terms with the highest relevance-model score."""
    if n < 1 or k < 1:
        raise ValueError(f"n and k must be >= 1, got n={n} k={k}")
    if not search(index, query_tokens, k):
        return list(query_tokens)
    scores = prf_rm_scores(query_tokens, index, corpus, k, lam, u)
    ranked = sorted(scores, key=lambda t: (-scores[t], t))
    return list(query_tokens) + ranked[:n]


def prf_emb(
    query_tokens,
    index: InvertedIndex,
    corpus: Corpus,
    table: EmbeddingTable,
    n: int,
    k: int,
) -> list[str]:
    """Append the n feedback-document terms most cosine-similar to the query embedding."""
    if n < 1 or k < 1:
        raise ValueError(f"n and k must be >= 1, got n={n} k={k}")
    candidates: set[str] = set()
    for doc_id, _ in search(index, query_tokens, k).pairs:
        candidates.update(corpus[doc_id].tokens)
    if not candidates:
        return list(query_tokens)
    qvec = query_embedding(table, query_tokens)
    ranked = sorted(
        candidates, key=lambda t: (-cosine_similarity(table.lookup(t), qvec), t)
    )
    return list(query_tokens) + ranked[:n]


def vocab_emb(query_tokens, table: EmbeddingTable, n: int) -> list[str]:
    """Append the n whole-vocabulary terms most cosine-similar to the query embedding."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    qvec = query_embedding(table, query_tokens)
    ranked = sorted(
        table.tokens(), key=lambda t: (-cosine_similarity(table.lookup(t), qvec), t)
    )
    return list(query_tokens) + ranked[:n]
