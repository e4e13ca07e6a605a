import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qreform.corpus import Corpus, Document, generate_synthetic
from qreform.index import (
    build_index,
    bm25_score,
    lm_prob,
    lm_query_likelihood,
    load_index,
    save_index,
    search,
)


def scalar_bm25(corpus_tokens, query, doc_idx, k1=1.2, b=0.75):
    """Independent literal transcription of the BM25 formula."""
    n = len(corpus_tokens)
    lengths = [len(toks) for toks in corpus_tokens]
    avgdl = sum(lengths) / n
    score = 0.0
    for term in query:
        tf = corpus_tokens[doc_idx].count(term)
        if tf == 0:
            continue
        df = sum(1 for toks in corpus_tokens if term in toks)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * lengths[doc_idx] / avgdl))
    return score


def corpus_from_token_lists(token_lists):
    return Corpus([Document(i, (), tuple(toks)) for i, toks in enumerate(token_lists)])


def test_build_index_counting_example():
    corpus = corpus_from_token_lists([["a", "b"], ["a"]])
    index = build_index(corpus)
    rows, tfs = index.postings["a"]
    assert rows.tolist() == [0, 1] and tfs.tolist() == [1.0, 1.0]
    rows, tfs = index.postings["b"]
    assert rows.tolist() == [0] and tfs.tolist() == [1.0]
    assert index.avg_doc_length == 1.5


def test_build_index_rejects_empty_corpus():
    with pytest.raises(ValueError):
        build_index(Corpus([]))


def test_index_conservation_invariants():
    corpus, _ = generate_synthetic(seed=9, n_topics=4, n_docs=200, n_queries=10, mismatch=0.5)
    index = build_index(corpus)
    assert index.collection_length == sum(index.doc_lengths.values())
    for term, (rows, tfs) in index.postings.items():
        assert index.collection_tf[term] == int(tfs.sum())
        for row in rows:
            assert int(index.doc_ids[row]) in index.doc_lengths


def test_bm25_empty_query_and_no_overlap(tiny_index):
    assert bm25_score(tiny_index, [], 0) == 0.0
    assert bm25_score(tiny_index, ["nonexistent"], 0) == 0.0


def test_bm25_hand_example():
    corpus = corpus_from_token_lists([["a", "a", "b"], ["c"]])
    index = build_index(corpus)
    expected = scalar_bm25([["a", "a", "b"], ["c"]], ["a"], 0)
    # df=1, N=2: idf = ln 2; |d0|=3, avgdl=2
    assert expected == pytest.approx(
        math.log(2.0) * 2 * 2.2 / (2 + 1.2 * (0.25 + 0.75 * 1.5)), abs=1e-12
    )
    assert bm25_score(index, ["a"], 0) == pytest.approx(expected, abs=1e-12)


def test_bm25_unknown_doc_error(tiny_index):
    with pytest.raises(KeyError):
        bm25_score(tiny_index, ["cat"], 123)


def test_bm25_monotone_in_tf():
    # same document length, increasing tf of the query term
    corpus = corpus_from_token_lists(
        [["a", "x", "y"], ["a", "a", "x"], ["a", "a", "a"], ["z", "z", "z"]]
    )
    index = build_index(corpus)
    scores = [bm25_score(index, ["a"], d) for d in (0, 1, 2)]
    assert scores[0] < scores[1] < scores[2]


def test_search_excludes_nonmatching_and_orders(tiny_index):
    result = search(tiny_index, ["cat"], 10)
    assert all(s > 0 for _, s in result.pairs)
    scores = [s for _, s in result.pairs]
    assert scores == sorted(scores, reverse=True)


def test_search_empty_for_unknown_terms(tiny_index):
    assert search(tiny_index, ["zebra", "lion"], 5).pairs == []


def test_search_k_larger_than_matches(tiny_index):
    result = search(tiny_index, ["river"], 50)
    assert result.ids == [3]


def test_search_tie_break_ascending_id():
    corpus = corpus_from_token_lists([["a"], ["a"], ["a"]])
    index = build_index(corpus)
    assert search(index, ["a"], 3).ids == [0, 1, 2]


def test_search_matches_bruteforce_oracle():
    rng = np.random.default_rng(11)
    vocab = [f"w{i}" for i in range(30)]
    token_lists = [
        [vocab[int(j)] for j in rng.integers(0, 30, size=rng.integers(3, 15))]
        for _ in range(50)
    ]
    corpus = corpus_from_token_lists(token_lists)
    index = build_index(corpus)
    for _ in range(40):
        query = [vocab[int(j)] for j in rng.integers(0, 30, size=int(rng.integers(1, 5)))]
        expected = sorted(
            (
                (d, scalar_bm25(token_lists, query, d))
                for d in range(50)
                if scalar_bm25(token_lists, query, d) > 0
            ),
            key=lambda pair: (-pair[1], pair[0]),
        )[:10]
        got = search(index, query, 10)
        assert [d for d, _ in expected] == got.ids
        for (_, se), (_, sg) in zip(expected, got.pairs):
            assert sg == pytest.approx(se, abs=1e-10)


@given(st.integers(min_value=1, max_value=8), st.integers(min_value=1, max_value=8))
@settings(max_examples=30)
def test_search_prefix_property(k1, k2, ):
    corpus = corpus_from_token_lists(
        [["a", "b"], ["a"], ["b", "b"], ["a", "b", "c"], ["c"], ["a", "c"]]
    )
    index = build_index(corpus)
    lo, hi = sorted((k1, k2))
    small = search(index, ["a", "b"], lo)
    big = search(index, ["a", "b"], hi)
    assert big.pairs[: len(small.pairs)] == small.pairs


def test_adding_term_never_shrinks_match_set(tiny_index):
    base = set(search(tiny_index, ["cat"], 100).ids)
    extended = set(search(tiny_index, ["cat", "fish"], 100).ids)
    assert base <= extended


def test_lm_prob_hand_example():
    corpus = corpus_from_token_lists([["a", "a", "b"]])
    index = build_index(corpus)
    # P(a|C) = 2/3, u = 1500: (2 + 1500*2/3) / (3 + 1500)
    assert lm_prob(index, "a", 0, 1500.0) == pytest.approx(1002.0 / 1503.0, abs=1e-12)


def test_lm_prob_unseen_term_zero(tiny_index):
    assert lm_prob(tiny_index, "zebra", 0, 1500.0) == 0.0


def test_lm_prob_requires_positive_u(tiny_index):
    with pytest.raises(ValueError):
        lm_prob(tiny_index, "cat", 0, 0.0)


def test_lm_sums_to_one_over_vocab(tiny_index, tiny_corpus):
    vocab = {t for d in tiny_corpus for t in d.tokens}
    for doc in tiny_corpus:
        total = sum(lm_prob(tiny_index, t, doc.id, 1500.0) for t in vocab)
        assert total == pytest.approx(1.0, abs=1e-9)


def test_lm_query_likelihood_product(tiny_index):
    assert lm_query_likelihood(tiny_index, [], 0) == 1.0
    single = lm_prob(tiny_index, "cat", 0)
    assert lm_query_likelihood(tiny_index, ["cat"], 0) == pytest.approx(single)
    two = lm_prob(tiny_index, "cat", 0) * lm_prob(tiny_index, "dog", 0)
    assert lm_query_likelihood(tiny_index, ["cat", "dog"], 0) == pytest.approx(two, abs=1e-15)


def test_index_persistence_roundtrip(tmp_path, tiny_index):
    path = tmp_path / "index.bin"
    save_index(tiny_index, path)
    loaded = load_index(path)
    assert loaded.n_docs == tiny_index.n_docs
    assert loaded.avg_doc_length == tiny_index.avg_doc_length
    assert search(loaded, ["cat", "tree"], 5).pairs == search(tiny_index, ["cat", "tree"], 5).pairs


def test_index_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError, match="magic"):
        load_index(path)
