import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qreform.corpus import FileFormatError, generate_synthetic
from qreform.embeddings import (
    EmbeddingTable,
    cooccurrence_embeddings,
    cosine_similarity,
    load_embeddings,
    query_embedding,
)


def write_embeddings(path, rows):
    path.write_text("\n".join(rows) + "\n")


def test_load_embeddings(tmp_path):
    path = tmp_path / "emb.txt"
    write_embeddings(path, ["cat 1 2 3 4", "dog 0 0 1 0", "fish -1 0.5 0 2"])
    table = load_embeddings(path)
    assert len(table) == 3 and table.dim == 4
    assert table.lookup("dog").tolist() == [0, 0, 1, 0]


def test_load_embeddings_dimension_error(tmp_path):
    path = tmp_path / "emb.txt"
    write_embeddings(path, ["cat 1 2 3 4", "dog 1 2 3 4 5"])
    with pytest.raises(FileFormatError, match=":2"):
        load_embeddings(path)


def test_load_embeddings_duplicate_token(tmp_path):
    path = tmp_path / "emb.txt"
    write_embeddings(path, ["cat 1 2", "cat 3 4"])
    with pytest.raises(FileFormatError, match="duplicate"):
        load_embeddings(path)


def test_oov_vector_seeded(tmp_path):
    path = tmp_path / "emb.txt"
    write_embeddings(path, ["cat 1 2 3"])
    t1 = load_embeddings(path, oov_seed=7)
    t2 = load_embeddings(path, oov_seed=7)
    t3 = load_embeddings(path, oov_seed=8)
    assert np.array_equal(t1.oov_vector, t2.oov_vector)
    assert not np.array_equal(t1.oov_vector, t3.oov_vector)
    assert np.all(np.abs(t1.oov_vector) <= 0.05)


def test_lookup_oov_shared(tmp_path):
    path = tmp_path / "emb.txt"
    write_embeddings(path, ["cat 1 2 3"])
    table = load_embeddings(path)
    a = table.lookup("unknown1")
    b = table.lookup("unknown2")
    assert a is b  # one shared OOV row


def test_lookup_pad_is_zero(tiny_table):
    assert np.all(tiny_table.lookup("") == 0)


def test_table_save_roundtrip(tmp_path, tiny_table):
    path = tmp_path / "emb.txt"
    tiny_table.save(path)
    loaded = load_embeddings(path)
    for tok in tiny_table.tokens():
        assert loaded.lookup(tok) == pytest.approx(tiny_table.lookup(tok), abs=1e-6)


def test_cosine_examples():
    v = np.array([1.0, 2.0, 3.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0)
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([1.0, 1.0])) == pytest.approx(
        1 / math.sqrt(2)
    )
    assert cosine_similarity(np.zeros(3), v) == 0.0


def test_cosine_dimension_mismatch():
    with pytest.raises(ValueError):
        cosine_similarity(np.ones(3), np.ones(4))


finite_vec = st.lists(
    st.floats(min_value=-100, max_value=100, allow_nan=False), min_size=3, max_size=3
)


@given(a=finite_vec, b=finite_vec, scale=st.floats(min_value=0.01, max_value=50))
@settings(max_examples=200)
def test_cosine_properties(a, b, scale):
    a = np.array(a)
    b = np.array(b)
    c = cosine_similarity(a, b)
    assert -1.0 - 1e-12 <= c <= 1.0 + 1e-12
    assert cosine_similarity(b, a) == pytest.approx(c, abs=1e-12)
    if np.linalg.norm(a) > 1e-6 and np.linalg.norm(b) > 1e-6:
        assert cosine_similarity(scale * a, b) == pytest.approx(c, rel=1e-8, abs=1e-9)


def test_query_embedding_single_and_mean(tiny_table):
    single = query_embedding(tiny_table, ["cat"])
    assert single == pytest.approx(tiny_table.lookup("cat"))
    tokens = ["cat", "dog", "tree"]
    manual = np.zeros(tiny_table.dim)
    for tok in tokens:
        manual = manual + tiny_table.lookup(tok)
    manual /= 3
    assert query_embedding(tiny_table, tokens) == pytest.approx(manual, abs=1e-12)


def test_query_embedding_opposite_vectors_cancel():
    table = EmbeddingTable(2, {"up": np.array([1.0, 2.0]), "down": np.array([-1.0, -2.0])})
    assert query_embedding(table, ["up", "down"]) == pytest.approx(np.zeros(2))


def test_query_embedding_empty_errors(tiny_table):
    with pytest.raises(ValueError):
        query_embedding(tiny_table, [])


def test_cooccurrence_embeddings_deterministic_and_unit_norm():
    corpus, split = generate_synthetic(seed=1, n_topics=2, n_docs=30, n_queries=4, mismatch=0.5)
    extra = sorted({t for q in split.all_queries() for t in q.tokens})
    t1 = cooccurrence_embeddings(corpus, dim=16, seed=5, extra_tokens=extra)
    t2 = cooccurrence_embeddings(corpus, dim=16, seed=5, extra_tokens=extra)
    for tok in t1.tokens():
        assert np.array_equal(t1.lookup(tok), t2.lookup(tok))
        assert np.linalg.norm(t1.lookup(tok)) == pytest.approx(1.0)


def test_cooccurrence_embeddings_group_similarity():
    # words sharing contexts end up closer than unrelated words
    corpus, _ = generate_synthetic(seed=2, n_topics=2, n_docs=60, n_queries=6, mismatch=0.0)
    table = cooccurrence_embeddings(corpus, dim=32, seed=0)
    sims_within = cosine_similarity(table.lookup("group0word0"), table.lookup("group0link"))
    sims_across = cosine_similarity(table.lookup("group0word0"), table.lookup("group5link"))
    assert sims_within > sims_across
