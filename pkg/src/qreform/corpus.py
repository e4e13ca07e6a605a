"""Document/query ingestion, tokenization, and synthetic corpus generation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

# Lowercase alphanumeric runs; everything else (incl. underscore) is a separator.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class FileFormatError(ValueError):
    """Raised when an input file cannot be parsed or violates an invariant."""


def tokenize(text: str) -> list[str]:
    """Lowercase `text` and split it on non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    """A retrieval unit: stable integer id plus tokenized title and body."""

    id: int
    title: tuple[str, ...]
    body: tuple[str, ...]

    @property
    def tokens(self) -> tuple[str, ...]:
        """Indexable token stream (title followed by body)."""
        return self.title + self.body


class Corpus:
    """Immutable collection of documents with unique non-negative ids."""

    def __init__(self, documents):
        self.documents: list[Document] = list(documents)
        self._by_id: dict[int, Document] = {}
        for doc in self.documents:
            if doc.id < 0:
                raise ValueError(f"document id must be non-negative, got {doc.id}")
            if doc.id in self._by_id:
                raise ValueError(f"duplicate document id {doc.id}")
            if not doc.body:
                raise ValueError(f"document {doc.id} has an empty body after tokenization")
            self._by_id[doc.id] = doc

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __contains__(self, doc_id: int) -> bool:
        return doc_id in self._by_id

    def __getitem__(self, doc_id: int) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise KeyError(f"unknown document id {doc_id}") from None

    def ids(self) -> list[int]:
        return [d.id for d in self.documents]


@dataclass(frozen=True)
class QueryRecord:
    """Original query tokens plus the ground-truth relevant document ids."""

    qid: int
    tokens: tuple[str, ...]
    relevant_ids: frozenset[int]

    def __post_init__(self):
        if self.qid < 0:
            raise ValueError(f"qid must be non-negative, got {self.qid}")
        if not self.tokens:
            raise ValueError(f"query {self.qid} has no tokens")
        if not self.relevant_ids:
            raise ValueError(f"query {self.qid} has no relevant documents")


@dataclass
class DatasetSplit:
    """Train/valid/test query lists with disjoint qids."""

    train: list[QueryRecord] = field(default_factory=list)
    valid: list[QueryRecord] = field(default_factory=list)
    test: list[QueryRecord] = field(default_factory=list)

    def __post_init__(self):
        seen: set[int] = set()
        for part in (self.train, self.valid, self.test):
            for q in part:
                if q.qid in seen:
                    raise ValueError(f"qid {q.qid} appears in more than one split")
                seen.add(q.qid)

    def all_queries(self) -> list[QueryRecord]:
        return self.train + self.valid + self.test


class Vocabulary:
    """Dense bijective token <-> id map."""

    def __init__(self, tokens=()):
        self._id_of: dict[str, int] = {}
        self._token_of: list[str] = []
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        idx = self._id_of.get(token)
        if idx is None:
            idx = len(self._token_of)
            self._id_of[token] = idx
            self._token_of.append(token)
        return idx

    def id_of(self, token: str) -> int:
        return self._id_of[token]

    def token_of(self, idx: int) -> str:
        return self._token_of[idx]

    def __contains__(self, token: str) -> bool:
        return token in self._id_of

    def __len__(self) -> int:
        return len(self._token_of)

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "Vocabulary":
        vocab = cls()
        for doc in corpus:
            for tok in doc.tokens:
                vocab.add(tok)
        return vocab


def _parse_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FileFormatError(f"{path}:{lineno}: malformed record: {exc}") from None
            if not isinstance(record, dict):
                raise FileFormatError(f"{path}:{lineno}: record is not an object")
            yield lineno, record


def load_corpus(path) -> Corpus:
    """Load a corpus from a JSONL file with fields id, title, text."""
    docs = []
    seen = set()
    for lineno, rec in _parse_jsonl(path):
        try:
            doc_id = int(rec["id"])
            title = rec.get("title", "")
            text = rec["text"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"{path}:{lineno}: malformed record: {exc}") from None
        if doc_id in seen:
            raise FileFormatError(f"{path}:{lineno}: duplicate document id {doc_id}")
        seen.add(doc_id)
        body = tuple(tokenize(text))
        if not body:
            raise FileFormatError(
                f"{path}:{lineno}: document {doc_id} has an empty body after tokenization"
            )
        docs.append(Document(id=doc_id, title=tuple(tokenize(title)), body=body))
    return Corpus(docs)


def write_corpus(corpus: Corpus, path) -> None:
    """Write a corpus in the native JSONL format (round-trips with load_corpus)."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus:
            rec = {"id": doc.id, "title": " ".join(doc.title), "text": " ".join(doc.body)}
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path, corpus: Corpus) -> DatasetSplit:
    """Load queries from a JSONL file with fields qid, query, relevant_ids.

    An optional `split` field assigns each record to train/valid/test
    (default train). Every relevant id must exist in `corpus`.
    """
    parts: dict[str, list[QueryRecord]] = {"train": [], "valid": [], "test": []}
    for lineno, rec in _parse_jsonl(path):
        try:
            qid = int(rec["qid"])
            query = rec["query"]
            relevant = [int(x) for x in rec["relevant_ids"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"{path}:{lineno}: malformed record: {exc}") from None
        split = rec.get("split", "train")
        if split not in parts:
            raise FileFormatError(f"{path}:{lineno}: unknown split {split!r}")
        tokens = tuple(tokenize(query))
        if not tokens:
            raise FileFormatError(f"{path}:{lineno}: query {qid} has no tokens")
        if not relevant:
            raise FileFormatError(f"{path}:{lineno}: query {qid} has no relevant documents")
        for doc_id in relevant:
            if doc_id not in corpus:
                raise FileFormatError(
                    f"{path}:{lineno}: query {qid} references unknown document {doc_id}"
                )
        parts[split].append(QueryRecord(qid=qid, tokens=tokens, relevant_ids=frozenset(relevant)))
    return DatasetSplit(**parts)


def write_dataset(split: DatasetSplit, path) -> None:
    """Write a dataset split in the native JSONL format."""
    with open(path, "w", encoding="utf-8") as fh:
        for name in ("train", "valid", "test"):
            for q in getattr(split, name):
                rec = {
                    "qid": q.qid,
                    "query": " ".join(q.tokens),
                    "relevant_ids": sorted(q.relevant_ids),
                    "split": name,
                }
                fh.write(json.dumps(rec) + "\n")


def convert_paragraph_dump(in_path, out_path) -> int:
    """Convert a tab-separated paragraph dump (id<TAB>text) to the native corpus format.

    Returns the number of converted records.
    """
    count = 0
    with open(in_path, "r", encoding="utf-8") as src, open(out_path, "w", encoding="utf-8") as dst:
        for lineno, line in enumerate(src, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            piece = line.split("\t", 1)
            if len(piece) != 2:
                raise FileFormatError(f"{in_path}:{lineno}: expected 'id<TAB>text'")
            try:
                doc_id = int(piece[0])
            except ValueError:
                raise FileFormatError(f"{in_path}:{lineno}: non-integer id {piece[0]!r}") from None
            dst.write(json.dumps({"id": doc_id, "title": "", "text": piece[1]}) + "\n")
            count += 1
    return count


# Synthetic generator knobs. Each query owns a relevant-document group with a
# small vocabulary of rare "gold" words (low frequency, decisive for finding
# the sibling documents) buried under high-frequency topic words that dominate
# term-frequency statistics and also fill the distractor documents. Feedback
# methods driven by frequency pick up the topic words; knowing which terms
# actually lift recall requires trying them.
_TOPIC_VOCAB = 20
_GOLD_WORDS = 4  # per group; each query anchors on a few of these
_GOLD_TF = 2
_LINK_TF = 2  # the group link word connects siblings once discovered
_DECOY_TYPES = 8  # distinct topic words per document
_DECOY_TF_RELEVANT = 6
_DECOY_TF_DISTRACTOR = 8
_DOCS_PER_GROUP = 4
_QUERIES_PER_GROUP = 3  # groups recur across splits, like entities in a real corpus
_BACKGROUND_VOCAB = 30
_BACKGROUND_COUNT = 6
_QUERY_GOLD = 4
_QUERY_TOPIC = 1


def generate_synthetic(
    seed: int,
    n_topics: int,
    n_docs: int,
    n_queries: int,
    mismatch: float,
) -> tuple[Corpus, DatasetSplit]:
    """Generate a topic-structured corpus with controllable query/document mismatch.

    Each topic owns a document vocabulary and a query vocabulary that share a
    (1 - mismatch) fraction of words: at mismatch=0 queries reuse document
    words verbatim, at mismatch=1 every query word is a synonym absent from
    all documents. Queries are split ~2/3 train, ~1/6 valid, ~1/6 test.
    Deterministic for a fixed seed.
    """
    if n_topics < 1:
        raise ValueError(f"n_topics must be >= 1, got {n_topics}")
    if n_docs < n_topics:
        raise ValueError(f"n_docs must be >= n_topics, got {n_docs} < {n_topics}")
    if n_queries < 1:
        raise ValueError(f"n_queries must be >= 1, got {n_queries}")
    if not 0.0 <= mismatch <= 1.0:
        raise ValueError(f"mismatch must be in [0, 1], got {mismatch}")

    rng = np.random.default_rng(seed)
    background = [f"common{i}" for i in range(_BACKGROUND_VOCAB)]

    def make_twin(words: list[str], syn_prefix: str) -> dict[str, str]:
        # Query-side image of a document vocabulary: a word maps to itself
        # when shared, or to a query-only synonym; exactly
        # round((1 - mismatch) * len) words are shared.
        order = rng.permutation(len(words))
        n_shared = int(round((1.0 - mismatch) * len(words)))
        shared = {words[j] for j in order[:n_shared]}
        return {w: (w if w in shared else f"{syn_prefix}syn{j}") for j, w in enumerate(words)}

    doc_vocabs: list[list[str]] = []
    topic_twins: list[dict[str, str]] = []
    for t in range(n_topics):
        words = [f"topic{t}word{j}" for j in range(_TOPIC_VOCAB)]
        doc_vocabs.append(words)
        topic_twins.append(make_twin(words, f"topic{t}"))

    n_groups = min(
        n_queries,
        max(1, n_docs // (_DOCS_PER_GROUP + 2)),
        max(1, -(-n_queries // _QUERIES_PER_GROUP)),
    )
    docs_per_group = max(1, min(_DOCS_PER_GROUP, n_docs // n_groups))

    def make_body(gold: list[str], decoys: list[str], decoy_tf: int) -> tuple[str, ...]:
        # Gold and decoy words each appear once in the opening span (candidate
        # pools read the first words); the bulk repeats decoys and background.
        body = list(gold) + list(decoys)
        bulk: list[str] = []
        bulk.extend(g for g in gold for _ in range(_GOLD_TF - 1))
        bulk.extend(d for d in decoys for _ in range(decoy_tf - 1))
        bulk.extend(
            background[int(rng.integers(_BACKGROUND_VOCAB))] for _ in range(_BACKGROUND_COUNT)
        )
        body.extend(bulk[int(j)] for j in rng.permutation(len(bulk)))
        return tuple(body)

    docs: list[Document] = []
    group_doc_ids: list[list[int]] = []
    group_covered: list[list[str]] = []
    group_twins: list[dict[str, str]] = []
    group_topics: list[int] = []
    for g in range(n_groups):
        topic = g % n_topics
        gold_words = [f"group{g}word{j}" for j in range(_GOLD_WORDS)]
        link_word = f"group{g}link"
        twin = dict(topic_twins[topic])
        twin.update(make_twin(gold_words, f"group{g}"))
        ids = []
        covered: list[str] = []
        for d in range(docs_per_group):
            # One gold anchor per document; the link word ties the group together.
            anchor = gold_words[d % _GOLD_WORDS]
            decoys = [doc_vocabs[topic][j] for j in rng.choice(_TOPIC_VOCAB, _DECOY_TYPES, replace=False)]
            doc_id = len(docs)
            docs.append(
                Document(
                    id=doc_id, title=(), body=make_body([anchor, link_word], decoys, _DECOY_TF_RELEVANT)
                )
            )
            ids.append(doc_id)
            if anchor not in covered:
                covered.append(anchor)
        group_doc_ids.append(ids)
        group_covered.append(covered)
        group_twins.append(twin)
        group_topics.append(topic)

    # Distractors carry only topic and background words, at higher frequency,
    # so frequency-driven expansion drifts toward them.
    topic_cursor = 0
    while len(docs) < n_docs:
        topic = topic_cursor % n_topics
        topic_cursor += 1
        decoys = [doc_vocabs[topic][j] for j in rng.choice(_TOPIC_VOCAB, _DECOY_TYPES, replace=False)]
        docs.append(
            Document(id=len(docs), title=(), body=make_body([], decoys, _DECOY_TF_DISTRACTOR))
        )

    queries: list[QueryRecord] = []
    for qid in range(n_queries):
        g = qid % n_groups
        covered = group_covered[g]
        twin = group_twins[g]
        picks = rng.choice(len(covered), min(_QUERY_GOLD, len(covered)), replace=False)
        tokens = [twin[covered[j]] for j in picks]
        topic_words = doc_vocabs[group_topics[g]]
        for j in rng.choice(_TOPIC_VOCAB, _QUERY_TOPIC, replace=False):
            tokens.append(twin[topic_words[int(j)]])
        queries.append(
            QueryRecord(qid=qid, tokens=tuple(tokens), relevant_ids=frozenset(group_doc_ids[g]))
        )

    n_train = max(1, (n_queries * 2) // 3)
    n_valid = (n_queries - n_train) // 2
    split = DatasetSplit(
        train=queries[:n_train],
        valid=queries[n_train : n_train + n_valid],
        test=queries[n_train + n_valid :],
    )
    return Corpus(docs), split
