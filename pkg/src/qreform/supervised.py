"""Supervised term labeling, the SL classifier, and the SL-Oracle bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import wrap
from .corpus import Corpus, QueryRecord
from .index import InvertedIndex, search
from .metrics import reward as reward_fn
from .neural import PolicyModel
from .prf import CandidatePool, build_pool
from .rl import AdamOptimizer

RELEVANCE_THRESHOLD = 0.005


@dataclass(frozen=True)
class TermLabel:
    qid: int
    pool_index: int
    token: str
    reward_base: float  # R for the original query
    reward_with: float  # R' for the query expanded with this term alone
    relevant: bool


def _is_relevant(r: float, r1: float) -> bool:
    # The relative-gain rule is undefined at R=0; any improvement from zero counts.
    if r > 0:
        return (r1 - r) / r > RELEVANCE_THRESHOLD
    return r1 > 0


def label_terms(
    query: QueryRecord,
    pool: CandidatePool,
    index: InvertedIndex,
    reward_k: int,
) -> list[TermLabel]:
    """Label each candidate by its individual contribution to the reward.

    Every term is tested in isolation (one retrieval per distinct token).
    """
    if len(pool) == 0:
        raise ValueError("candidate pool is empty")
    base = search(index, query.tokens, reward_k)
    r = reward_fn(base.ids, query.relevant_ids, reward_k)
    cache: dict[str, float] = {}
    labels = []
    for term in pool.terms:
        if term.token not in cache:
            try:
                ranked = search(index, list(query.tokens) + [term.token], reward_k)
            except Exception as exc:
                raise RuntimeError(f"retrieval failed for term {term.token!r}: {exc}") from exc
            cache[term.token] = reward_fn(ranked.ids, query.relevant_ids, reward_k)
        r1 = cache[term.token]
        labels.append(
            TermLabel(
                qid=query.qid,
                pool_index=term.pool_index,
                token=term.token,
                reward_base=r,
                reward_with=r1,
                relevant=_is_relevant(r, r1),
            )
        )
    return labels


def save_labels(path, labels) -> None:
    """Cache labels as TSV (labeling costs one retrieval per candidate)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("qid\tterm\tR\tR1\trelevant\n")
        for lab in labels:
            fh.write(
                f"{lab.qid}\t{lab.token}\t{lab.reward_base:.10g}"
                f"\t{lab.reward_with:.10g}\t{int(lab.relevant)}\n"
            )


def load_labels(path) -> dict[tuple[int, str], tuple[float, float, bool]]:
    """Read a label cache back as (qid, token) -> (R, R', relevant)."""
    out: dict[tuple[int, str], tuple[float, float, bool]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("qid\t"):
            raise ValueError(f"{path}: not a label cache file")
        for line in fh:
            qid, token, r, r1, relevant = line.rstrip("\n").split("\t")
            out[(int(qid), token)] = (float(r), float(r1), relevant == "1")
    return out


def train_classifier(
    data: list[tuple[QueryRecord, CandidatePool, list[TermLabel]]],
    model: PolicyModel,
    steps: int,
    lr: float = 1e-3,
    seed: int = 0,
) -> list[float]:
    """Fit the term scorer to binary labels with mean cross-entropy and ADAM.

    Needs at least one positive and one negative label overall. Returns the
    per-step loss history (empty when steps=0, parameters untouched).
    """
    flat = [lab for _, _, labels in data for lab in labels]
    n_pos = sum(1 for lab in flat if lab.relevant)
    if n_pos == 0 or n_pos == len(flat):
        raise ValueError("training labels are single-class; need both positives and negatives")
    rng = np.random.default_rng(seed)
    opt = AdamOptimizer(model.policy_params(), lr=lr)
    history: list[float] = []
    for step in range(steps):
        query, pool, labels = data[int(rng.integers(len(data)))]
        y = np.array([1.0 if lab.relevant else 0.0 for lab in labels])
        query_vec = model.encode_query(query.tokens)
        term_vecs = model.encode_terms(pool)
        probs = model.score_terms(query_vec, term_vecs)
        bce = ad.tmean(
            -(wrap(y) * ad.log(probs) + wrap(1.0 - y) * ad.log(wrap(1.0) - probs))
        )
        model.params.zero_grad()
        bce.backward()
        opt.step()
        history.append(bce.item())
    return history


def classifier_select(model: PolicyModel, query_tokens, pool: CandidatePool,
                      threshold: float = 0.5) -> list[int]:
    """Pool indices the trained classifier marks positive."""
    query_vec = model.encode_query(query_tokens)
    term_vecs = model.encode_terms(pool)
    probs = model.score_terms(query_vec, term_vecs).data
    return [int(i) for i in np.nonzero(probs > threshold)[0]]


def sl_oracle_rankings(
    queries,
    index: InvertedIndex,
    corpus: Corpus,
    pool_m: int,
    pool_k: int,
    reward_k: int,
    retrieve_k: int,
    label_cache: dict[tuple[int, str], tuple[float, float, bool]] | None = None,
) -> tuple[dict[int, list[int]], float]:
    """Rankings from appending every individually-helpful term to each query.

    Returns (qid -> ranked ids, fraction of candidate terms labeled relevant).
    """
    rankings: dict[int, list[int]] = {}
    n_terms = 0
    n_pos = 0
    for query in queries:
        results = search(index, query.tokens, pool_k)
        pool = build_pool(query.tokens, results, corpus, m=pool_m, k=pool_k)
        if label_cache is not None:
            base = search(index, query.tokens, reward_k)
            r = reward_fn(base.ids, query.relevant_ids, reward_k)
            labels = []
            for term in pool.terms:
                cached = label_cache.get((query.qid, term.token))
                if cached is None:
                    cached_labels = label_terms(query, pool, index, reward_k)
                    labels = cached_labels
                    break
                labels.append(
                    TermLabel(query.qid, term.pool_index, term.token,
                              cached[0], cached[1], cached[2])
                )
        else:
            labels = label_terms(query, pool, index, reward_k)
        positives = [lab.token for lab in labels if lab.relevant]
        n_terms += len(labels)
        n_pos += len(positives)
        expanded = list(query.tokens) + positives
        rankings[query.qid] = search(index, expanded, retrieve_k).ids
    fraction = n_pos / n_terms if n_terms else 0.0
    return rankings, fraction
