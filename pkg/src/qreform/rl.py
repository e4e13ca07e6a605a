"""REINFORCE training with a value-network baseline, entropy regularization,
sequential decoding with beam search, and the ADAM optimizer."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, wrap
from .corpus import Corpus, QueryRecord
from .index import InvertedIndex, SearchResult, search
from .metrics import reward as reward_fn
from .neural import ModelConfig, PolicyModel
from .prf import CandidatePool, build_pool, sample_feedback_doc


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    pool_m: int = 300
    pool_k: int = 7
    prf_n: int = 300  # expansion terms per document for the PRF baselines
    prf_k: int = 9  # feedback documents for the PRF baselines
    epsilon: float = 0.5  # test-time selection threshold
    entropy_lambda: float = 1e-3
    value_alpha: float = 0.1
    adam_lr: float = 1e-4
    value_lr: float | None = None  # defaults to adam_lr
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float | None = None  # derived: 1.0 for recurrent models
    reward_k: int = 40
    rounds: int = 2
    episodes: int = 2000
    batch_size: int = 1  # >1 averages per-episode losses before each update
    eval_every: int = 200
    patience: int = 20
    beam: int = 4
    max_len: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.clip_norm is None and self.model.kind in ("rnn", "rnn-seq"):
            self.clip_norm = 1.0


@dataclass
class EpisodeTrace:
    qid: int
    pool: CandidatePool
    selected: list[int]  # pool indices, in selection order
    reformulated: list[str]
    reward: float
    baseline: float
    loss_ca: float
    loss_cb: float
    loss_ch: float


class AdamOptimizer:
    """ADAM with bias correction; parameters are updated in place."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: float | None = None,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.step_count = 0
        self._m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self._v = {n: np.zeros_like(p.data) for n, p in params.items()}

    def step(self) -> None:
        grads = {}
        for name, p in self.params.items():
            g = np.zeros_like(p.data) if p.grad is None else p.grad
            if not np.all(np.isfinite(g)):
                raise ValueError(f"non-finite gradient for parameter {name!r}; step aborted")
            grads[name] = g
        if self.clip_norm is not None:
            total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if total > self.clip_norm:
                scale = self.clip_norm / total
                grads = {n: g * scale for n, g in grads.items()}
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = grads[name]
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def select_terms_test(probs: np.ndarray, epsilon: float) -> list[int]:
    """Indices of terms with P > epsilon, in pool order."""
    return [int(i) for i in np.nonzero(np.asarray(probs) > epsilon)[0]]


def select_terms_train(probs: np.ndarray, rng: np.random.Generator) -> list[int]:
    """Independent Bernoulli draw per term."""
    probs = np.asarray(probs)
    draws = rng.random(probs.shape)
    return [int(i) for i in np.nonzero(draws < probs)[0]]


def reinforce_loss(probs: Tensor, selected, reward: float, baseline: float) -> Tensor:
    """(R - Rbar) * sum over selected terms of -log P; the advantage is a constant."""
    if not selected:
        return wrap(0.0)
    picked = ad.gather(probs, list(selected))
    return (reward - baseline) * ad.tsum(-ad.log(picked))


def value_loss(reward: float, estimate: Tensor, alpha: float) -> Tensor:
    """alpha * (R - Rbar)^2; gradient reaches only the value network."""
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    diff = reward - estimate
    return alpha * diff * diff


def entropy_reg(probs: Tensor, lam: float) -> Tensor:
    """-lam * sum_t P_t log P_t over every candidate term (reported value)."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    probs = wrap(probs)
    if lam == 0:
        return wrap(0.0)
    return -lam * ad.tsum(probs * ad.log(probs))


def entropy_penalty(probs: Tensor, lam: float, bernoulli: bool = True) -> Tensor:
    """Training regularizer: lam times the negative entropy of the selection
    distribution, so minimizing it discourages peaked probabilities.

    Per-term selections are independent Bernoullis, hence both the P and
    (1 - P) sides contribute; for a softmax step distribution only the
    P log P side exists.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    probs = wrap(probs)
    if lam == 0:
        return wrap(0.0)
    neg_entropy = ad.tsum(probs * ad.log(probs))
    if bernoulli:
        flipped = wrap(1.0) - probs
        neg_entropy = neg_entropy + ad.tsum(flipped * ad.log(flipped))
    return lam * neg_entropy


def _sample_sequence(model, query_vec, term_vecs, cfg, rng):
    """Sample a term sequence from the generator; returns (indices, logps, step_dists)."""
    n = term_vecs.shape[0]
    h, c = model.seq_state0()
    prev = None
    indices: list[int] = []
    logps: list[Tensor] = []
    dists: list[Tensor] = []
    for _ in range(cfg.max_len):
        h, c = model.seq_step(query_vec, prev, h, c)
        dist = model.seq_term_probs(h, term_vecs)
        dists.append(dist)
        p = dist.data / dist.data.sum()
        action = int(rng.choice(n + 1, p=p))
        logps.append(ad.log(ad.gather(dist, [action])))
        if action == n:  # stop token
            break
        indices.append(action)
        prev = ad.gather(term_vecs, action)
    return indices, logps, dists


def _rollout(
    query: QueryRecord,
    index: InvertedIndex,
    corpus: Corpus,
    model: PolicyModel,
    cfg: TrainConfig,
    rng: np.random.Generator,
):
    """Run one episode forward pass; returns (trace, policy loss, value loss).

    The candidate pool comes from a single feedback document sampled uniformly
    from the initial top-k, which speeds up learning. Returns None when the
    initial retrieval is empty.
    """
    results = search(index, query.tokens, cfg.pool_k)
    if not results:
        return None
    feedback = sample_feedback_doc(results, cfg.pool_k, rng)
    pool = build_pool(
        query.tokens,
        SearchResult([(feedback, 1.0)]),
        corpus,
        m=cfg.pool_m,
        k=1,
        radius=model.config.window_radius,
    )

    query_vec = model.encode_query(query.tokens)
    term_vecs = model.encode_terms(pool)
    baseline = model.value_estimate(query_vec.detach(), term_vecs.detach())

    if model.config.kind == "rnn-seq":
        selected, logps, dists = _sample_sequence(model, query_vec, term_vecs, cfg, rng)
        reformulated = list(query.tokens) + [pool.terms[i].token for i in selected]
        ranked = search(index, reformulated, cfg.reward_k)
        r = reward_fn(ranked.ids, query.relevant_ids, cfg.reward_k)
        advantage = r - baseline.item()
        c_a = advantage * ad.tsum(-ad.concat(logps, axis=0)) if logps else wrap(0.0)
        c_h = wrap(0.0)
        for dist in dists:
            c_h = c_h + entropy_penalty(dist, cfg.entropy_lambda, bernoulli=False)
    else:
        probs = model.score_terms(query_vec, term_vecs)
        selected = select_terms_train(probs.data, rng)
        reformulated = list(query.tokens) + [pool.terms[i].token for i in selected]
        ranked = search(index, reformulated, cfg.reward_k)
        r = reward_fn(ranked.ids, query.relevant_ids, cfg.reward_k)
        c_a = reinforce_loss(probs, selected, r, baseline.item())
        c_h = entropy_penalty(probs, cfg.entropy_lambda)

    c_b = value_loss(r, baseline, cfg.value_alpha)
    trace = EpisodeTrace(
        qid=query.qid,
        pool=pool,
        selected=selected,
        reformulated=reformulated,
        reward=r,
        baseline=baseline.item(),
        loss_ca=c_a.item(),
        loss_cb=c_b.item(),
        loss_ch=c_h.item(),
    )
    return trace, c_a + c_h, c_b


def _apply_updates(model, policy_opt, value_opt, policy_losses, value_losses):
    """Average the collected losses and take one ADAM step per network."""
    model.params.zero_grad()
    scale = 1.0 / len(policy_losses)
    policy_total = policy_losses[0]
    for extra in policy_losses[1:]:
        policy_total = policy_total + extra
    (policy_total * scale).backward()
    value_total = value_losses[0]
    for extra in value_losses[1:]:
        value_total = value_total + extra
    (value_total * scale).backward()  # disjoint parameters; policy grads intact
    policy_opt.step()
    value_opt.step()


def train_episode(
    query: QueryRecord,
    index: InvertedIndex,
    corpus: Corpus,
    model: PolicyModel,
    policy_opt: AdamOptimizer,
    value_opt: AdamOptimizer,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> EpisodeTrace | None:
    """One REINFORCE episode and one ADAM step on each network.

    Returns None (no update) when the initial retrieval is empty.
    """
    rolled = _rollout(query, index, corpus, model, cfg, rng)
    if rolled is None:
        return None
    trace, policy_loss, value_loss_t = rolled
    _apply_updates(model, policy_opt, value_opt, [policy_loss], [value_loss_t])
    return trace


def decode_sequence(
    model: PolicyModel,
    query_vec: Tensor,
    term_vecs: Tensor,
    beam: int = 4,
    max_len: int = 50,
) -> list[int]:
    """Beam-search decode: pool indices of the best-scoring finished hypothesis.

    A hypothesis finishes by emitting the stop action (whose log-probability
    counts) or by reaching max_len (forced stop, no stop term added).
    """
    if beam < 1 or max_len < 1:
        raise ValueError(f"beam and max_len must be >= 1, got beam={beam} max_len={max_len}")
    n = term_vecs.shape[0]
    h0, c0 = model.seq_state0()
    # hypothesis: (logp, indices, h, c, done)
    beams = [(0.0, (), h0, c0, False)]
    for _ in range(max_len):
        if all(done for _, _, _, _, done in beams):
            break
        expanded = []
        for logp, idx, h, c, done in beams:
            if done:
                expanded.append((logp, idx, h, c, True))
                continue
            prev = ad.gather(term_vecs, idx[-1]) if idx else None
            h2, c2 = model.seq_step(query_vec, prev, h, c)
            dist = model.seq_term_probs(h2, term_vecs).data
            logs = np.log(dist)
            for a in range(n):
                expanded.append((logp + logs[a], idx + (a,), h2, c2, False))
            expanded.append((logp + logs[n], idx, h2, c2, True))
        expanded.sort(key=lambda item: (-item[0], item[1]))
        beams = expanded[:beam]
    best = min(beams, key=lambda item: (-item[0], item[1]))
    return list(best[1])


def reformulate(
    model: PolicyModel,
    query_tokens,
    index: InvertedIndex,
    corpus: Corpus,
    cfg: TrainConfig,
    k: int,
    rounds: int | None = None,
):
    """Test-time pipeline: retrieve, build the pool, select terms, re-retrieve.

    Each extra round rebuilds the pool from the previous round's results.
    Returns (final SearchResult, reformulated query, last pool, last probs).
    """
    rounds = cfg.rounds if rounds is None else rounds
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    q0 = list(query_tokens)
    current = search(index, q0, max(k, cfg.pool_k))
    q_prime = q0
    pool = None
    probs = None
    for _ in range(rounds):
        if not current:
            break
        pool = build_pool(q0, current, corpus, m=cfg.pool_m, k=cfg.pool_k,
                          radius=model.config.window_radius)
        query_vec = model.encode_query(q0)
        term_vecs = model.encode_terms(pool)
        if model.config.kind == "rnn-seq":
            selected = decode_sequence(model, query_vec, term_vecs, cfg.beam, cfg.max_len)
            probs = None
        else:
            probs = model.score_terms(query_vec, term_vecs).data
            selected = select_terms_test(probs, cfg.epsilon)
        q_prime = q0 + [pool.terms[i].token for i in selected]
        current = search(index, q_prime, max(k, cfg.pool_k))
    return current.top(k), q_prime, pool, probs


def mean_reward(
    model: PolicyModel,
    queries,
    index: InvertedIndex,
    corpus: Corpus,
    cfg: TrainConfig,
    rounds: int | None = None,
) -> float:
    """Mean test-time reward (R@reward_k) over a query set."""
    total = 0.0
    for q in queries:
        ranked, _, _, _ = reformulate(model, q.tokens, index, corpus, cfg, cfg.reward_k, rounds)
        total += reward_fn(ranked.ids, q.relevant_ids, cfg.reward_k)
    return total / len(list(queries)) if queries else 0.0


def fit(
    model: PolicyModel,
    index: InvertedIndex,
    corpus: Corpus,
    train_queries: list[QueryRecord],
    valid_queries: list[QueryRecord],
    cfg: TrainConfig,
    log_path=None,
) -> list[dict]:
    """REINFORCE training loop with periodic validation and early stopping.

    Returns one record per evaluation; the model keeps the parameters of the
    best validation step (final parameters when no validation ran).
    """
    if not train_queries:
        raise ValueError("cannot train without training queries")
    rng = np.random.default_rng(cfg.seed)
    policy_opt = AdamOptimizer(
        model.policy_params(), cfg.adam_lr, cfg.adam_beta1, cfg.adam_beta2,
        cfg.adam_eps, cfg.clip_norm,
    )
    value_opt = AdamOptimizer(
        model.value_params(),
        cfg.adam_lr if cfg.value_lr is None else cfg.value_lr,
        cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.clip_norm,
    )
    records: list[dict] = []
    best_reward = -np.inf
    best_snapshot: dict[str, np.ndarray] | None = None
    stale_evals = 0
    episode = 0
    window: list[EpisodeTrace] = []
    pending_policy: list[Tensor] = []
    pending_value: list[Tensor] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        stop = False
        while episode < cfg.episodes and not stop:
            for qi in rng.permutation(len(train_queries)):
                rolled = _rollout(
                    train_queries[int(qi)], index, corpus, model, cfg, rng
                )
                episode += 1
                if rolled is not None:
                    trace, policy_loss, value_loss_t = rolled
                    window.append(trace)
                    pending_policy.append(policy_loss)
                    pending_value.append(value_loss_t)
                if len(pending_policy) >= cfg.batch_size:
                    _apply_updates(model, policy_opt, value_opt, pending_policy, pending_value)
                    pending_policy, pending_value = [], []
                if episode % cfg.eval_every == 0 or episode == cfg.episodes:
                    record = {
                        "episode": episode,
                        "train_reward_mean": (
                            float(np.mean([t.reward for t in window])) if window else 0.0
                        ),
                        "loss_ca": float(np.mean([t.loss_ca for t in window])) if window else 0.0,
                        "loss_cb": float(np.mean([t.loss_cb for t in window])) if window else 0.0,
                        "loss_ch": float(np.mean([t.loss_ch for t in window])) if window else 0.0,
                    }
                    window = []
                    if valid_queries:
                        vr = mean_reward(model, valid_queries, index, corpus, cfg)
                        record["valid_reward"] = vr
                        if vr > best_reward + 1e-12:
                            best_reward = vr
                            best_snapshot = {
                                n: t.data.copy() for n, t in model.params.items()
                            }
                            stale_evals = 0
                        else:
                            stale_evals += 1
                    records.append(record)
                    if log_fh:
                        log_fh.write(json.dumps(record) + "\n")
                        log_fh.flush()
                    if valid_queries and stale_evals >= cfg.patience:
                        stop = True
                if episode >= cfg.episodes or stop:
                    break
    finally:
        if log_fh:
            log_fh.close()
    if best_snapshot is not None:
        for name, data in best_snapshot.items():
            model.params[name].data[...] = data
    return records


def tune_epsilon(
    model: PolicyModel,
    queries,
    index: InvertedIndex,
    corpus: Corpus,
    cfg: TrainConfig,
    grid=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6),
) -> tuple[float, float]:
    """Grid-search the selection threshold on a validation set.

    Returns (best epsilon, its mean reward); ties prefer the larger threshold.
    """
    from dataclasses import replace as _replace

    best = (-1.0, cfg.epsilon)
    for eps in grid:
        r = mean_reward(model, queries, index, corpus, _replace(cfg, epsilon=eps))
        if r >= best[0]:
            best = (r, eps)
    return best[1], best[0]


def dump_term_probs(path, qid: int, pool: CandidatePool, probs: np.ndarray) -> None:
    """TSV of (qid, term, context, P) for candidate-probability inspection."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("qid\tterm\tcontext\tprob\n")
        for term, p in zip(pool.terms, probs):
            ctx = " ".join(t if t else "_" for t in term.context)
            fh.write(f"{qid}\t{term.token}\t{ctx}\t{p:.6f}\n")
