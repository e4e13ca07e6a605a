import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qreform.corpus import (
    Corpus,
    DatasetSplit,
    Document,
    FileFormatError,
    QueryRecord,
    Vocabulary,
    convert_paragraph_dump,
    generate_synthetic,
    load_corpus,
    load_dataset,
    tokenize,
    write_corpus,
    write_dataset,
)


def test_tokenize_examples():
    assert tokenize("Sea Turtle, Diet") == ["sea", "turtle", "diet"]
    assert tokenize("") == []
    assert tokenize("Cross-Entropy  Method") == ["cross", "entropy", "method"]


def test_tokenize_digits_and_underscore():
    assert tokenize("BM25_rocks v2") == ["bm25", "rocks", "v2"]


@given(st.text(max_size=200))
@settings(max_examples=200)
def test_tokenize_idempotent(text):
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


def test_document_tokens_concatenate_title_and_body():
    doc = Document(5, ("a", "b"), ("c",))
    assert doc.tokens == ("a", "b", "c")


def test_corpus_rejects_duplicate_ids():
    docs = [Document(7, (), ("x",)), Document(7, (), ("y",))]
    with pytest.raises(ValueError, match="7"):
        Corpus(docs)


def test_corpus_rejects_empty_body():
    with pytest.raises(ValueError, match="empty body"):
        Corpus([Document(0, ("title",), ())])


def test_corpus_lookup(tiny_corpus):
    assert tiny_corpus[2].id == 2
    with pytest.raises(KeyError, match="99"):
        tiny_corpus[99]


def test_query_record_invariants():
    with pytest.raises(ValueError):
        QueryRecord(qid=0, tokens=(), relevant_ids=frozenset({1}))
    with pytest.raises(ValueError):
        QueryRecord(qid=0, tokens=("a",), relevant_ids=frozenset())


def test_dataset_split_qids_disjoint():
    q = QueryRecord(qid=1, tokens=("a",), relevant_ids=frozenset({0}))
    with pytest.raises(ValueError, match="qid 1"):
        DatasetSplit(train=[q], valid=[q])


def test_vocabulary_bijective():
    vocab = Vocabulary(["a", "b", "a", "c"])
    assert len(vocab) == 3
    for i in range(len(vocab)):
        assert vocab.id_of(vocab.token_of(i)) == i


def test_load_corpus_roundtrip(tmp_path, tiny_corpus):
    path = tmp_path / "corpus.jsonl"
    write_corpus(tiny_corpus, path)
    loaded = load_corpus(path)
    assert len(loaded) == len(tiny_corpus)
    for a, b in zip(loaded, tiny_corpus):
        assert (a.id, a.title, a.body) == (b.id, b.title, b.body)


def test_load_corpus_valid_file(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(
        '{"id": 0, "title": "T", "text": "hello world"}\n'
        '{"id": 1, "text": "second doc"}\n'
        '{"id": 2, "title": "", "text": "third"}\n'
    )
    corpus = load_corpus(path)
    assert len(corpus) == 3
    assert corpus[0].body == ("hello", "world")


def test_load_corpus_duplicate_id_error(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": 7, "text": "a"}\n{"id": 7, "text": "b"}\n')
    with pytest.raises(FileFormatError, match="duplicate document id 7"):
        load_corpus(path)


def test_load_corpus_malformed_line_number(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": 0, "text": "ok"}\nnot json\n')
    with pytest.raises(FileFormatError, match=":2"):
        load_corpus(path)


def test_load_corpus_empty_body_rejected(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": 0, "text": "!!! ---"}\n')
    with pytest.raises(FileFormatError, match="empty body"):
        load_corpus(path)


def test_load_dataset(tmp_path, tiny_corpus):
    path = tmp_path / "d.jsonl"
    records = [
        {"qid": 0, "query": "cat dog", "relevant_ids": [0, 1]},
        {"qid": 1, "query": "tree", "relevant_ids": [2], "split": "valid"},
        {"qid": 2, "query": "stone", "relevant_ids": [3], "split": "test"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    split = load_dataset(path, tiny_corpus)
    assert [q.qid for q in split.train] == [0]
    assert [q.qid for q in split.valid] == [1]
    assert [q.qid for q in split.test] == [2]


def test_load_dataset_unknown_doc(tmp_path, tiny_corpus):
    path = tmp_path / "d.jsonl"
    path.write_text('{"qid": 3, "query": "cat", "relevant_ids": [999]}\n')
    with pytest.raises(FileFormatError, match="query 3 references unknown document 999"):
        load_dataset(path, tiny_corpus)


def test_load_dataset_empty_relevant(tmp_path, tiny_corpus):
    path = tmp_path / "d.jsonl"
    path.write_text('{"qid": 0, "query": "cat", "relevant_ids": []}\n')
    with pytest.raises(FileFormatError, match="no relevant documents"):
        load_dataset(path, tiny_corpus)


def test_dataset_roundtrip(tmp_path, tiny_corpus):
    split = DatasetSplit(
        train=[QueryRecord(0, ("cat",), frozenset({0}))],
        valid=[QueryRecord(1, ("dog",), frozenset({1}))],
        test=[QueryRecord(2, ("tree",), frozenset({2, 3}))],
    )
    path = tmp_path / "d.jsonl"
    write_dataset(split, path)
    loaded = load_dataset(path, tiny_corpus)
    assert loaded.test[0].relevant_ids == frozenset({2, 3})


def test_convert_paragraph_dump(tmp_path):
    src = tmp_path / "dump.tsv"
    src.write_text("0\tFirst paragraph text\n1\tSecond one\n")
    out = tmp_path / "corpus.jsonl"
    assert convert_paragraph_dump(src, out) == 2
    corpus = load_corpus(out)
    assert corpus[1].body == ("second", "one")


def test_convert_rejects_bad_line(tmp_path):
    src = tmp_path / "dump.tsv"
    src.write_text("no tab here\n")
    with pytest.raises(FileFormatError, match=":1"):
        convert_paragraph_dump(src, tmp_path / "out.jsonl")


def test_generate_synthetic_determinism():
    c1, s1 = generate_synthetic(seed=5, n_topics=3, n_docs=60, n_queries=9, mismatch=0.4)
    c2, s2 = generate_synthetic(seed=5, n_topics=3, n_docs=60, n_queries=9, mismatch=0.4)
    assert [d.body for d in c1] == [d.body for d in c2]
    assert [q.tokens for q in s1.all_queries()] == [q.tokens for q in s2.all_queries()]


def test_generate_synthetic_sizes():
    corpus, split = generate_synthetic(seed=1, n_topics=4, n_docs=120, n_queries=30, mismatch=0.5)
    assert len(corpus) == 120
    assert len(split.all_queries()) == 30
    assert len(split.train) == 20
    assert len(split.valid) == 5
    assert len(split.test) == 5


def test_generate_synthetic_zero_mismatch_terms_present():
    corpus, split = generate_synthetic(seed=2, n_topics=2, n_docs=40, n_queries=6, mismatch=0.0)
    for q in split.all_queries():
        relevant_tokens = set()
        for doc_id in q.relevant_ids:
            relevant_tokens.update(corpus[doc_id].tokens)
        corpus_tokens = {t for d in corpus for t in d.tokens}
        for tok in q.tokens:
            assert tok in corpus_tokens
        # gold anchors are drawn from words the relevant documents contain
        assert any(tok in relevant_tokens for tok in q.tokens)


def test_generate_synthetic_full_mismatch_zero_overlap():
    corpus, split = generate_synthetic(seed=3, n_topics=2, n_docs=40, n_queries=6, mismatch=1.0)
    doc_vocab = {t for d in corpus for t in d.tokens}
    for q in split.all_queries():
        assert not set(q.tokens) & doc_vocab


def test_generate_synthetic_validates_bounds():
    with pytest.raises(ValueError):
        generate_synthetic(seed=0, n_topics=0, n_docs=10, n_queries=1, mismatch=0.5)
    with pytest.raises(ValueError):
        generate_synthetic(seed=0, n_topics=5, n_docs=3, n_queries=1, mismatch=0.5)
    with pytest.raises(ValueError):
        generate_synthetic(seed=0, n_topics=1, n_docs=10, n_queries=0, mismatch=0.5)
    with pytest.raises(ValueError):
        generate_synthetic(seed=0, n_topics=1, n_docs=10, n_queries=1, mismatch=1.5)


def test_generate_synthetic_relevant_ids_exist():
    corpus, split = generate_synthetic(seed=4, n_topics=3, n_docs=50, n_queries=12, mismatch=0.3)
    for q in split.all_queries():
        for doc_id in q.relevant_ids:
            assert doc_id in corpus
