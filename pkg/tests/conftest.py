import numpy as np
import pytest

from qreform.corpus import Corpus, Document, QueryRecord
from qreform.embeddings import EmbeddingTable
from qreform.index import build_index
from qreform.prf import CandidatePool, CandidateTerm


@pytest.fixture
def tiny_corpus():
    docs = [
        Document(0, ("alpha", "beta"), ("cat", "dog", "cat", "bird")),
        Document(1, (), ("dog", "fish", "fish", "fish", "tree")),
        Document(2, ("gamma",), ("cat", "tree", "tree", "stone", "bird", "bird")),
        Document(3, (), ("stone", "stone", "river", "cloud")),
    ]
    return Corpus(docs)


@pytest.fixture
def tiny_index(tiny_corpus):
    return build_index(tiny_corpus)


@pytest.fixture
def tiny_table(tiny_corpus):
    tokens = sorted({t for d in tiny_corpus for t in d.tokens})
    return EmbeddingTable.random(tokens + ["query", "words"], dim=8, seed=3)


def make_pool(tokens, radius=2, source=0):
    terms = []
    padded = [""] * radius + list(tokens) + [""] * radius
    for i, tok in enumerate(tokens):
        ctx = tuple(padded[i : i + 2 * radius + 1])
        terms.append(CandidateTerm(token=tok, context=ctx, source=source, pool_index=i))
    return CandidatePool(terms=terms, m=len(tokens), k=1)


@pytest.fixture
def small_pool():
    return make_pool(["cat", "dog", "fish", "tree", "stone"])


def seeded_queries(corpus, n=3):
    ids = corpus.ids()
    return [
        QueryRecord(qid=i, tokens=("cat", "dog"), relevant_ids=frozenset({ids[i % len(ids)]}))
        for i in range(n)
    ]
