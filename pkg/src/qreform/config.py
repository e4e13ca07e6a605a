"""YAML experiment configuration mapped onto the training dataclasses."""

from __future__ import annotations

import yaml

from .neural import ModelConfig
from .rl import TrainConfig


def train_config_from_dict(raw: dict) -> TrainConfig:
    """Build a TrainConfig from a nested dict; absent keys keep their defaults."""
    raw = dict(raw or {})
    model_raw = dict(raw.get("model", {}))
    if "query_windows" in model_raw:
        model_raw["query_windows"] = tuple(model_raw["query_windows"])
    if "term_windows" in model_raw:
        model_raw["term_windows"] = tuple(model_raw["term_windows"])
    model = ModelConfig(**model_raw)

    kwargs: dict = {"model": model}
    pool = raw.get("pool", {})
    if "m" in pool:
        kwargs["pool_m"] = int(pool["m"])
    if "k" in pool:
        kwargs["pool_k"] = int(pool["k"])
    prf = raw.get("prf", {})
    if "n" in prf:
        kwargs["prf_n"] = int(prf["n"])
    if "k" in prf:
        kwargs["prf_k"] = int(prf["k"])
    select = raw.get("select", {})
    if "epsilon" in select:
        kwargs["epsilon"] = float(select["epsilon"])
    losses = raw.get("losses", {})
    if "entropy_lambda" in losses:
        kwargs["entropy_lambda"] = float(losses["entropy_lambda"])
    if "value_alpha" in losses:
        kwargs["value_alpha"] = float(losses["value_alpha"])
    adam = raw.get("adam", {})
    for src, dst in (("lr", "adam_lr"), ("beta1", "adam_beta1"),
                     ("beta2", "adam_beta2"), ("eps", "adam_eps")):
        if src in adam:
            kwargs[dst] = float(adam[src])
    if "clip_norm" in adam:
        kwargs["clip_norm"] = None if adam["clip_norm"] is None else float(adam["clip_norm"])
    training = raw.get("training", {})
    for key in ("episodes", "eval_every", "patience"):
        if key in training:
            kwargs[key] = int(training[key])
    decode = raw.get("decode", {})
    if "beam" in decode:
        kwargs["beam"] = int(decode["beam"])
    if "max_len" in decode:
        kwargs["max_len"] = int(decode["max_len"])
    for key in ("reward_k", "rounds", "seed"):
        if key in raw:
            kwargs[key] = int(raw[key])
    return TrainConfig(**kwargs)


def load_train_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is not None and not isinstance(raw, dict):
        raise ValueError(f"{path}: config root must be a mapping")
    return train_config_from_dict(raw or {})


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "model": {
            "kind": cfg.model.kind,
            "dim": cfg.model.dim,
            "window_radius": cfg.model.window_radius,
            "encoder_layers": cfg.model.encoder_layers,
            "query_windows": list(cfg.model.query_windows),
            "term_windows": list(cfg.model.term_windows),
            "bidirectional": cfg.model.bidirectional,
        },
        "pool": {"m": cfg.pool_m, "k": cfg.pool_k},
        "prf": {"n": cfg.prf_n, "k": cfg.prf_k},
        "select": {"epsilon": cfg.epsilon},
        "losses": {"entropy_lambda": cfg.entropy_lambda, "value_alpha": cfg.value_alpha},
        "adam": {
            "lr": cfg.adam_lr,
            "beta1": cfg.adam_beta1,
            "beta2": cfg.adam_beta2,
            "eps": cfg.adam_eps,
            "clip_norm": cfg.clip_norm,
        },
        "training": {
            "episodes": cfg.episodes,
            "eval_every": cfg.eval_every,
            "patience": cfg.patience,
        },
        "decode": {"beam": cfg.beam, "max_len": cfg.max_len},
        "reward_k": cfg.reward_k,
        "rounds": cfg.rounds,
        "seed": cfg.seed,
    }


def save_train_config(cfg: TrainConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(train_config_to_dict(cfg), fh, sort_keys=False)
