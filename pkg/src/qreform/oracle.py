"""RL-Oracle: conservative upper bound from overfitting fresh models on small subsets."""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, QueryRecord
from .embeddings import EmbeddingTable
from .index import InvertedIndex
from .neural import PolicyModel
from .rl import AdamOptimizer, TrainConfig, mean_reward, train_episode

OVERFIT_PATIENCE = 50  # epochs without a new best reward before a subset stops
MAX_EPOCHS = 400


def _overfit_subset(
    subset: list[QueryRecord],
    index: InvertedIndex,
    corpus: Corpus,
    table: EmbeddingTable,
    cfg: TrainConfig,
    seed: int,
    patience: int,
    max_epochs: int,
) -> tuple[float, PolicyModel]:
    """Train a fresh model on one subset until its reward stops improving.

    Returns the best reward seen and the model restored to that point.
    """
    model = PolicyModel(cfg.model, table, seed=seed)
    rng = np.random.default_rng(seed)
    policy_opt = AdamOptimizer(
        model.policy_params(), cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2,
        cfg.adam_eps, cfg.clip_norm,
    )
    value_opt = AdamOptimizer(
        model.value_params(), cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2,
        cfg.adam_eps, cfg.clip_norm,
    )
    best = mean_reward(model, subset, index, corpus, cfg)
    snapshot = {n: t.data.copy() for n, t in model.params.items()}
    stale = 0
    for _ in range(max_epochs):
        for qi in rng.permutation(len(subset)):
            trace = train_episode(
                subset[int(qi)], index, corpus, model, policy_opt, value_opt, cfg, rng
            )
            if trace is not None and not np.isfinite(trace.loss_ca + trace.loss_cb):
                raise ValueError("non-finite training loss")
        current = mean_reward(model, subset, index, corpus, cfg)
        if current > best + 1e-12:
            best = current
            snapshot = {n: t.data.copy() for n, t in model.params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    for name, data in snapshot.items():
        model.params[name].data[...] = data
    return best, model


def rl_oracle(
    queries: list[QueryRecord],
    subset_size: int,
    index: InvertedIndex,
    corpus: Corpus,
    table: EmbeddingTable,
    cfg: TrainConfig,
    patience: int = OVERFIT_PATIENCE,
    max_epochs: int = MAX_EPOCHS,
    collect_rankings: bool = False,
):
    """Mean best-overfit reward over contiguous subsets of the evaluation set.

    Each subset gets a freshly initialized model (seed offset by the subset
    index). Returns (mean reward, per-subset rewards), plus a per-query
    ranking dict from each subset's best model when collect_rankings is set.
    """
    if subset_size < 1 or subset_size > len(queries):
        raise ValueError(
            f"subset size must be in [1, {len(queries)}], got {subset_size}"
        )
    subsets = [queries[i : i + subset_size] for i in range(0, len(queries), subset_size)]
    per_subset: list[float] = []
    rankings: dict[int, list[int]] = {}
    for i, subset in enumerate(subsets):
        try:
            best, model = _overfit_subset(
                subset, index, corpus, table, cfg, cfg.seed + 1 + i, patience, max_epochs
            )
        except ValueError as exc:
            raise ValueError(f"training diverged on subset {i}: {exc}") from exc
        per_subset.append(best)
        if collect_rankings:
            from .rl import reformulate

            for q in subset:
                ranked, _, _, _ = reformulate(
                    model, q.tokens, index, corpus, cfg, max(cfg.reward_k, 40)
                )
                rankings[q.qid] = ranked.ids
    mean_value = float(np.mean(per_subset))
    if collect_rankings:
        return mean_value, per_subset, rankings
    return mean_value, per_subset


def write_oracle_tsv(path, per_subset: list[float], mean_value: float) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("subset\treward\n")
        for i, r in enumerate(per_subset):
            fh.write(f"{i}\t{r:.6f}\n")
        fh.write(f"mean\t{mean_value:.6f}\n")
