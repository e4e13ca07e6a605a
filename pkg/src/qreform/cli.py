"""Command-line entry points: indexing, training, evaluation, reformulation, converters."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_train_config, train_config_to_dict
from .corpus import (
    Corpus,
    FileFormatError,
    convert_paragraph_dump,
    generate_synthetic,
    load_corpus,
    load_dataset,
    tokenize,
    write_corpus,
    write_dataset,
)
from .embeddings import load_embeddings
from .index import build_index, load_index, save_index, search
from .metrics import evaluate_rankings
from .neural import ModelConfig, PolicyModel, load_checkpoint, save_checkpoint
from .oracle import rl_oracle, write_oracle_tsv
from .prf import prf_emb, prf_rm, prf_tfidf, vocab_emb
from .rl import TrainConfig, dump_term_probs, fit, reformulate
from .supervised import label_terms, sl_oracle_rankings, train_classifier
from .prf import build_pool

log = logging.getLogger("qreform")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_REFUSED = 3

PRF_METHODS = ("prf-tfidf", "prf-rm", "prf-emb", "vocab-emb")
LEARNED_METHODS = ("sl-ff", "sl-cnn", "rl-ff", "rl-cnn", "rl-rnn", "rl-rnn-seq")
ORACLE_METHODS = ("sl-oracle", "rl-oracle")
ALL_METHODS = ("raw",) + PRF_METHODS + LEARNED_METHODS + ORACLE_METHODS

_MODEL_KIND = {
    "sl-ff": "ff",
    "sl-cnn": "cnn",
    "rl-ff": "ff",
    "rl-cnn": "cnn",
    "rl-rnn": "rnn",
    "rl-rnn-seq": "rnn-seq",
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _setup_logging() -> None:
    level = os.environ.get("QREFORM_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _require(path, what: str):
    if path is None:
        raise CliError(f"--{what} is required for this invocation")
    if not Path(path).exists():
        raise CliError(f"no such file: {path}")
    return path


def _load_config(args) -> TrainConfig:
    if getattr(args, "config", None):
        cfg = load_train_config(_require(args.config, "config"))
    else:
        cfg = TrainConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "rounds", None) is not None:
        cfg = replace(cfg, rounds=args.rounds)
    return cfg


def cmd_index(args) -> int:
    corpus = load_corpus(_require(args.corpus, "corpus"))
    out = Path(args.out)
    if out.exists() and not args.force:
        print(f"refusing to overwrite {out} (use --force)", file=sys.stderr)
        return EXIT_REFUSED
    index = build_index(corpus)
    save_index(index, out)
    print(f"indexed {index.n_docs} documents, {len(index.postings)} terms -> {out}")
    return EXIT_OK


def _model_config_for(method: str, cfg: TrainConfig) -> ModelConfig:
    return replace(cfg.model, kind=_MODEL_KIND[method])


def cmd_train(args) -> int:
    if args.model not in LEARNED_METHODS:
        raise CliError(f"unknown model {args.model!r}; choose from {', '.join(LEARNED_METHODS)}")
    cfg = _load_config(args)
    cfg = replace(cfg, model=_model_config_for(args.model, cfg))
    index = load_index(_require(args.index, "index"))
    corpus = load_corpus(_require(args.corpus, "corpus"))
    dataset = load_dataset(_require(args.dataset, "dataset"), corpus)
    table = load_embeddings(_require(args.embeddings, "embeddings"), oov_seed=cfg.seed)
    if args.dry_run:
        print("config valid; nothing written")
        for line in str(train_config_to_dict(cfg)).splitlines():
            print(line)
        return EXIT_OK
    model = PolicyModel(cfg.model, table, seed=cfg.seed)
    out = Path(args.out)
    log_path = out.with_suffix(out.suffix + ".log.jsonl")
    if args.model.startswith("sl-"):
        data = []
        for query in dataset.train:
            results = search(index, query.tokens, cfg.pool_k)
            pool = build_pool(query.tokens, results, corpus, m=cfg.pool_m, k=cfg.pool_k,
                              radius=cfg.model.window_radius)
            data.append((query, pool, label_terms(query, pool, index, cfg.reward_k)))
        history = train_classifier(data, model, steps=cfg.episodes, lr=cfg.adam_lr,
                                   seed=cfg.seed)
        print(f"trained {args.model}: {len(history)} steps, "
              f"final loss {history[-1]:.4f}" if history else "no training steps")
    else:
        records = fit(model, index, corpus, dataset.train, dataset.valid, cfg,
                      log_path=log_path)
        if records:
            last = records[-1]
            print(f"trained {args.model}: {last['episode']} episodes, "
                  f"train reward {last['train_reward_mean']:.4f}"
                  + (f", valid reward {last.get('valid_reward', float('nan')):.4f}"
                     if "valid_reward" in last else ""))
    save_checkpoint(out, model)
    print(f"checkpoint -> {out}")
    return EXIT_OK


def _split_queries(dataset, name: str):
    queries = getattr(dataset, name)
    if not queries:
        raise CliError(f"split {name!r} is empty")
    return queries


def _rankings_for_method(method, queries, index, corpus, table, cfg, args, retrieve_k):
    if method == "raw":
        return {q.qid: search(index, q.tokens, retrieve_k).ids for q in queries}
    if method in PRF_METHODS:
        out = {}
        for q in queries:
            if method == "prf-tfidf":
                expanded = prf_tfidf(q.tokens, index, corpus, n=cfg.prf_n, k=cfg.prf_k)
            elif method == "prf-rm":
                expanded = prf_rm(q.tokens, index, corpus, n=cfg.prf_n, k=cfg.prf_k)
            elif method == "prf-emb":
                expanded = prf_emb(q.tokens, index, corpus, table, n=cfg.prf_n, k=cfg.prf_k)
            else:
                expanded = vocab_emb(q.tokens, table, n=cfg.prf_n)
            out[q.qid] = search(index, expanded, retrieve_k).ids
        return out
    if method in LEARNED_METHODS:
        model = load_checkpoint(_require(args.checkpoint, "checkpoint"), table)
        out = {}
        for q in queries:
            ranked, _, _, _ = reformulate(model, q.tokens, index, corpus, cfg, retrieve_k)
            out[q.qid] = ranked.ids
        return out
    if method == "sl-oracle":
        rankings, fraction = sl_oracle_rankings(
            queries, index, corpus, cfg.pool_m, cfg.pool_k, cfg.reward_k, retrieve_k)
        print(f"sl-oracle positive-term fraction: {fraction:.4f}")
        return rankings
    if method == "rl-oracle":
        mean_r, per_subset, rankings = rl_oracle(
            list(queries), args.subset_size, index, corpus, table, cfg,
            collect_rankings=True)
        print(f"rl-oracle mean best reward (R@{cfg.reward_k}): {mean_r:.4f}")
        if args.out:
            write_oracle_tsv(Path(args.out).with_suffix(".subsets.tsv"), per_subset, mean_r)
        return rankings
    raise CliError(f"unknown method {method!r}; choose from {', '.join(ALL_METHODS)}")


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    index = load_index(_require(args.index, "index"))
    corpus = load_corpus(_require(args.corpus, "corpus"))
    dataset = load_dataset(_require(args.dataset, "dataset"), corpus)
    queries = _split_queries(dataset, args.split)
    relevant = {q.qid: q.relevant_ids for q in queries}
    methods = []
    for chunk in args.method or ["raw"]:
        methods.extend(m.strip() for m in chunk.split(",") if m.strip())
    table = None
    needs_table = any(m in LEARNED_METHODS or m in ("prf-emb", "vocab-emb", "rl-oracle")
                      for m in methods)
    if needs_table:
        table = load_embeddings(_require(args.embeddings, "embeddings"), oov_seed=cfg.seed)
    recall_k = args.k if args.k else 40
    retrieve_k = max(recall_k, 10, 40)

    if args.sweep_candidates:
        sweep = [int(x) for x in args.sweep_candidates.split(",")]
        rows = []
        for m_value in sweep:
            swept = replace(cfg, pool_m=m_value, prf_n=m_value)
            for method in methods:
                rankings = _rankings_for_method(
                    method, queries, index, corpus, table, swept, args, retrieve_k)
                report = evaluate_rankings(rankings, relevant, recall_k=recall_k)
                rows.append((method, m_value, report.mean[f"R@{recall_k}"]))
        header = f"method\tM\tR@{recall_k}"
        print(header)
        for method, m_value, r in rows:
            print(f"{method}\t{m_value}\t{r:.4f}")
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(header + "\n")
                for method, m_value, r in rows:
                    fh.write(f"{method}\t{m_value}\t{r:.6f}\n")
        return EXIT_OK

    columns = None
    summary = []
    for method in methods:
        rankings = _rankings_for_method(
            method, queries, index, corpus, table, cfg, args, retrieve_k)
        report = evaluate_rankings(rankings, relevant, recall_k=recall_k)
        columns = report.columns
        summary.append((method, report))
        if args.out:
            report.write_tsv(Path(args.out).with_suffix(f".{method}.tsv"))
    print("method\t" + "\t".join(columns))
    for method, report in summary:
        mean = report.mean
        print(method + "\t" + "\t".join(f"{mean[c]:.4f}" for c in columns))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("method\t" + "\t".join(columns) + "\n")
            for method, report in summary:
                mean = report.mean
                fh.write(method + "\t" + "\t".join(f"{mean[c]:.6f}" for c in columns) + "\n")
    return EXIT_OK


def cmd_reformulate(args) -> int:
    cfg = _load_config(args)
    index = load_index(_require(args.index, "index"))
    corpus = load_corpus(_require(args.corpus, "corpus"))
    table = load_embeddings(_require(args.embeddings, "embeddings"), oov_seed=cfg.seed)
    model = load_checkpoint(_require(args.checkpoint, "checkpoint"), table)
    k = args.k if args.k else 3

    def titles(result):
        lines = []
        for doc_id, score in result.pairs[:k]:
            doc = corpus[doc_id]
            title = " ".join(doc.title) if doc.title else " ".join(doc.body[:8]) + " ..."
            lines.append(f"  [{doc_id}] ({score:.3f}) {title}")
        return lines or ["  (no results)"]

    for i, text in enumerate(args.query):
        tokens = tokenize(text)
        if not tokens:
            raise CliError(f"query {text!r} has no tokens")
        before = search(index, tokens, k)
        ranked, q_prime, pool, probs = reformulate(
            model, tokens, index, corpus, cfg, k, rounds=args.rounds)
        print(f"query: {' '.join(tokens)}")
        for line in titles(before):
            print(line)
        print(f"reformulated: {' '.join(q_prime)}")
        for line in titles(ranked):
            print(line)
        if args.probs and pool is not None and probs is not None:
            path = Path(args.probs)
            if len(args.query) > 1:
                path = path.with_suffix(f".{i}{path.suffix}")
            dump_term_probs(path, i, pool, probs)
            print(f"term probabilities -> {path}")
    return EXIT_OK


def cmd_convert(args) -> int:
    count = convert_paragraph_dump(_require(args.input, "input"), args.out)
    print(f"converted {count} records -> {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    corpus, split = generate_synthetic(
        seed=args.seed if args.seed is not None else 0,
        n_topics=args.topics,
        n_docs=args.docs,
        n_queries=args.queries,
        mismatch=args.mismatch,
    )
    write_corpus(corpus, args.out_corpus)
    write_dataset(split, args.out_dataset)
    print(f"wrote {len(corpus)} documents -> {args.out_corpus}")
    print(f"wrote {len(split.train)}/{len(split.valid)}/{len(split.test)} "
          f"train/valid/test queries -> {args.out_dataset}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qreform", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("index", help="build and persist an inverted index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("train", help="train a term-selection model")
    common(p)
    p.add_argument("--model", required=True, help="|".join(LEARNED_METHODS))
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate reformulation methods")
    common(p)
    p.add_argument("--method", action="append", help="comma-separated or repeated")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--checkpoint")
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--k", type=int, help="recall cutoff (default 40)")
    p.add_argument("--subset-size", type=int, default=25, help="rl-oracle subset size")
    p.add_argument("--sweep-candidates", help="comma list of per-document term caps")
    p.add_argument("--out", help="write summary / sweep TSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reformulate", help="show before/after retrieval for ad-hoc queries")
    common(p)
    p.add_argument("--query", action="append", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k", type=int, help="results to display (default 3)")
    p.add_argument("--rounds", type=int)
    p.add_argument("--probs", help="dump per-term probabilities to this TSV")
    p.set_defaults(func=cmd_reformulate)

    p = sub.add_parser("convert", help="convert an id<TAB>text paragraph dump")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synth", help="generate a synthetic corpus and dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--topics", type=int, default=20)
    p.add_argument("--docs", type=int, default=2000)
    p.add_argument("--queries", type=int, default=300)
    p.add_argument("--mismatch", type=float, default=0.5)
    p.add_argument("--out-corpus", required=True)
    p.add_argument("--out-dataset", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FileNotFoundError, FileFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - unexpected failure
        log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
