"""qreform: a self-contained query-reformulation laboratory.

BM25 retrieval over an inverted index, classical pseudo-relevance-feedback
baselines, a neural term-selection policy trained with REINFORCE against
document recall, and SL/RL oracle bounds, all runnable on synthetic
desk-scale corpora.
"""

from .corpus import (
    Corpus,
    DatasetSplit,
    Document,
    QueryRecord,
    Vocabulary,
    generate_synthetic,
    load_corpus,
    load_dataset,
    tokenize,
    write_corpus,
    write_dataset,
)
from .embeddings import EmbeddingTable, cosine_similarity, load_embeddings, query_embedding
from .index import (
    InvertedIndex,
    SearchResult,
    bm25_score,
    build_index,
    lm_prob,
    lm_query_likelihood,
    load_index,
    save_index,
    search,
)
from .metrics import (
    EvalReport,
    average_precision_at_k,
    evaluate_rankings,
    map_at_k,
    precision_at_k,
    recall_at_k,
    reward,
)
from .neural import ModelConfig, PolicyModel, load_checkpoint, save_checkpoint
from .prf import CandidatePool, CandidateTerm, build_pool, prf_emb, prf_rm, prf_tfidf, vocab_emb
from .rl import TrainConfig, decode_sequence, fit, reformulate, train_episode

__all__ = [
    "Corpus",
    "DatasetSplit",
    "Document",
    "QueryRecord",
    "Vocabulary",
    "generate_synthetic",
    "load_corpus",
    "load_dataset",
    "tokenize",
    "write_corpus",
    "write_dataset",
    "EmbeddingTable",
    "cosine_similarity",
    "load_embeddings",
    "query_embedding",
    "InvertedIndex",
    "SearchResult",
    "bm25_score",
    "build_index",
    "lm_prob",
    "lm_query_likelihood",
    "load_index",
    "save_index",
    "search",
    "EvalReport",
    "average_precision_at_k",
    "evaluate_rankings",
    "map_at_k",
    "precision_at_k",
    "recall_at_k",
    "reward",
    "ModelConfig",
    "PolicyModel",
    "load_checkpoint",
    "save_checkpoint",
    "CandidatePool",
    "CandidateTerm",
    "build_pool",
    "prf_emb",
    "prf_rm",
    "prf_tfidf",
    "vocab_emb",
    "TrainConfig",
    "decode_sequence",
    "fit",
    "reformulate",
    "train_episode",
]
