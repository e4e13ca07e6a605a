"""Inverted index with BM25 ranking and Dirichlet-smoothed language-model statistics."""

from __future__ import annotations

import math
import pickle
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus

BM25_K1 = 1.2
BM25_B = 0.75
DIRICHLET_U = 1500.0

_MAGIC = b"QRIX"
_FORMAT_VERSION = 1


@dataclass
class SearchResult:
    """Ranked (doc id, score) pairs, scores non-increasing, ties by ascending id."""

    pairs: list[tuple[int, float]]

    @property
    def ids(self) -> list[int]:
        return [doc_id for doc_id, _ in self.pairs]

    def __len__(self) -> int:
        return len(self.pairs)

    def __bool__(self) -> bool:
        return bool(self.pairs)

    def top(self, k: int) -> "SearchResult":
        return SearchResult(self.pairs[:k])


class InvertedIndex:
    """Postings, document lengths, and collection statistics over a corpus."""

    def __init__(self, doc_ids, doc_lengths, postings, k1: float = BM25_K1, b: float = BM25_B):
        # doc_ids: sorted array of external ids; postings map terms to
        # (row indices into doc_ids, term frequencies).
        self.doc_ids = np.asarray(doc_ids, dtype=np.int64)
        self._row_of = {int(d): r for r, d in enumerate(self.doc_ids)}
        self._lengths = np.asarray(doc_lengths, dtype=np.float64)
        self.postings: dict[str, tuple[np.ndarray, np.ndarray]] = postings
        self.k1 = k1
        self.b = b

        self.n_docs = int(len(self.doc_ids))
        self.avg_doc_length = float(self._lengths.mean())
        self.collection_tf: dict[str, int] = {
            t: int(tfs.sum()) for t, (_, tfs) in self.postings.items()
        }
        self.collection_length = int(self._lengths.sum())
        # Per-document BM25 length normalization, precomputed once.
        self._norm = self.k1 * (1.0 - self.b + self.b * self._lengths / self.avg_doc_length)

    @property
    def doc_lengths(self) -> dict[int, int]:
        return {int(d): int(l) for d, l in zip(self.doc_ids, self._lengths)}

    def doc_length(self, doc_id: int) -> int:
        return int(self._lengths[self._row(doc_id)])

    def df(self, term: str) -> int:
        entry = self.postings.get(term)
        return 0 if entry is None else int(len(entry[0]))

    def tf(self, term: str, doc_id: int) -> int:
        entry = self.postings.get(term)
        if entry is None:
            return 0
        rows, tfs = entry
        pos = np.searchsorted(rows, self._row(doc_id))
        if pos < len(rows) and rows[pos] == self._row(doc_id):
            return int(tfs[pos])
        return 0

    def idf(self, term: str) -> float:
        n = self.df(term)
        if n == 0:
            return 0.0
        return math.log(1.0 + (self.n_docs - n + 0.5) / (n + 0.5))

    def _row(self, doc_id: int) -> int:
        try:
            return self._row_of[doc_id]
        except KeyError:
            raise KeyError(f"unknown document id {doc_id}") from None


def build_index(corpus: Corpus, k1: float = BM25_K1, b: float = BM25_B) -> InvertedIndex:
    """Build the inverted index over a corpus (title + body tokens)."""
    if len(corpus) == 0:
        raise ValueError("cannot index an empty corpus")
    docs = sorted(corpus, key=lambda d: d.id)
    doc_ids = [d.id for d in docs]
    lengths = [len(d.tokens) for d in docs]
    acc: dict[str, list[tuple[int, int]]] = {}
    for row, doc in enumerate(docs):
        for term, tf in Counter(doc.tokens).items():
            acc.setdefault(term, []).append((row, tf))
    postings = {
        term: (
            np.array([r for r, _ in entries], dtype=np.int64),
            np.array([tf for _, tf in entries], dtype=np.float64),
        )
        for term, entries in acc.items()
    }
    return InvertedIndex(doc_ids, lengths, postings, k1=k1, b=b)


def bm25_score(index: InvertedIndex, query, doc_id: int) -> float:
    """BM25 score of one document for a token sequence (duplicates add up)."""
    row = index._row(doc_id)
    norm = index._norm[row]
    score = 0.0
    for term, count in Counter(query).items():
        tf = index.tf(term, doc_id)
        if tf == 0:
            continue
        score += count * index.idf(term) * tf * (index.k1 + 1.0) / (tf + norm)
    return score


def search(index: InvertedIndex, query, k: int) -> SearchResult:
    """Top-k documents by BM25 over the union of query-term postings.

    Zero-score documents are excluded; ties break by ascending doc id.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = np.zeros(index.n_docs)
    touched = np.zeros(index.n_docs, dtype=bool)
    for term, count in Counter(query).items():
        entry = index.postings.get(term)
        if entry is None:
            continue
        rows, tfs = entry
        idf = index.idf(term)
        scores[rows] += count * idf * tfs * (index.k1 + 1.0) / (tfs + index._norm[rows])
        touched[rows] = True
    candidates = np.nonzero(touched & (scores > 0.0))[0]
    if len(candidates) == 0:
        return SearchResult([])
    # Sort by descending score, then ascending doc id (rows are id-ordered).
    order = candidates[np.lexsort((candidates, -scores[candidates]))]
    top = order[:k]
    return SearchResult([(int(index.doc_ids[r]), float(scores[r])) for r in top])


def lm_prob(index: InvertedIndex, term: str, doc_id: int, u: float = DIRICHLET_U) -> float:
    """Dirichlet-smoothed P(term | doc)."""
    if u <= 0:
        raise ValueError(f"u must be > 0, got {u}")
    length = index.doc_length(doc_id)
    p_coll = index.collection_tf.get(term, 0) / index.collection_length
    return (index.tf(term, doc_id) + u * p_coll) / (length + u)


def lm_query_likelihood(index: InvertedIndex, query, doc_id: int, u: float = DIRICHLET_U) -> float:
    """Product of per-term Dirichlet-smoothed probabilities (1.0 for an empty query)."""
    prob = 1.0
    for term in query:
        prob *= lm_prob(index, term, doc_id, u)
    return prob


def save_index(index: InvertedIndex, path) -> None:
    """Persist the index as a versioned binary file."""
    payload = {
        "doc_ids": index.doc_ids.tolist(),
        "doc_lengths": index._lengths.tolist(),
        "postings": {
            t: (rows.tolist(), tfs.tolist()) for t, (rows, tfs) in index.postings.items()
        },
        "k1": index.k1,
        "b": index.b,
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _FORMAT_VERSION, index.n_docs))
        pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)


def load_index(path) -> InvertedIndex:
    """Load an index, validating the file header."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not an index file (bad magic {magic!r})")
        version, n_docs = struct.unpack("<IQ", fh.read(12))
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported index format version {version}")
        payload = pickle.load(fh)
    postings = {
        t: (np.array(rows, dtype=np.int64), np.array(tfs, dtype=np.float64))
        for t, (rows, tfs) in payload["postings"].items()
    }
    index = InvertedIndex(
        payload["doc_ids"], payload["doc_lengths"], postings, k1=payload["k1"], b=payload["b"]
    )
    if index.n_docs != n_docs:
        raise ValueError(f"{path}: header document count {n_docs} != payload {index.n_docs}")
    return index
