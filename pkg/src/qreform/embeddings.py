"""Fixed word-vector table with a single learnable out-of-vocabulary vector."""

from __future__ import annotations

import numpy as np

from .corpus import FileFormatError

OOV_INIT_RANGE = 0.05
PAD_TOKEN = ""


class EmbeddingTable:
    """token -> vector map; unknown tokens share one (trainable) OOV vector.

    The pad token maps to the zero vector, not the OOV vector, so sequence
    padding does not leak gradient into the OOV row.
    """

    def __init__(self, dim: int, vectors: dict[str, np.ndarray], oov_seed: int = 0):
        self.dim = dim
        self.vectors = vectors
        rng = np.random.default_rng(oov_seed)
        self.oov_vector = rng.uniform(-OOV_INIT_RANGE, OOV_INIT_RANGE, size=dim)
        self._zero = np.zeros(dim)

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def tokens(self) -> list[str]:
        return list(self.vectors)

    def lookup(self, token: str) -> np.ndarray:
        if token == PAD_TOKEN:
            return self._zero
        return self.vectors.get(token, self.oov_vector)

    @classmethod
    def random(cls, tokens, dim: int, seed: int = 0) -> "EmbeddingTable":
        """Seeded random table for desk-scale experiments."""
        rng = np.random.default_rng(seed)
        vectors = {}
        for tok in tokens:
            if tok not in vectors:
                vectors[tok] = rng.uniform(-1.0, 1.0, size=dim)
        return cls(dim, vectors, oov_seed=seed)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok, vec in self.vectors.items():
                fh.write(tok + " " + " ".join(f"{x:.8g}" for x in vec) + "\n")


def cooccurrence_embeddings(
    corpus,
    dim: int,
    seed: int = 0,
    window: int = 4,
    extra_tokens=(),
) -> EmbeddingTable:
    """Random-projection co-occurrence vectors computed from a corpus.

    Every token gets a seeded random base vector; a token's embedding is the
    normalized sum of the base vectors of its window neighbours across the
    corpus, so words appearing in similar contexts end up nearby. Tokens never
    seen in the corpus (`extra_tokens`) keep their normalized base vector.
    Deterministic for a fixed seed; a desk-scale stand-in for pretrained
    distributional embeddings.
    """
    rng = np.random.default_rng(seed)
    tokens: list[str] = []
    seen = set()
    for doc in corpus:
        for tok in doc.tokens:
            if tok not in seen:
                seen.add(tok)
                tokens.append(tok)
    for tok in extra_tokens:
        if tok not in seen:
            seen.add(tok)
            tokens.append(tok)
    base = {tok: rng.standard_normal(dim) for tok in sorted(tokens)}
    acc = {tok: np.zeros(dim) for tok in tokens}
    for doc in corpus:
        toks = doc.tokens
        for i, tok in enumerate(toks):
            lo = max(0, i - window)
            hi = min(len(toks), i + window + 1)
            for j in range(lo, hi):
                if j != i:
                    acc[tok] += base[toks[j]]
    vectors = {}
    for tok in tokens:
        vec = acc[tok]
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec = base[tok]
            norm = np.linalg.norm(vec)
        vectors[tok] = vec / norm
    return EmbeddingTable(dim, vectors, oov_seed=seed)


def load_embeddings(path, oov_seed: int = 0) -> EmbeddingTable:
    """Load a text embedding file: one 'token f1 ... fd' row per line."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                raise FileFormatError(f"{path}:{lineno}: expected 'token f1 ... fd'")
            token = parts[0]
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                raise FileFormatError(f"{path}:{lineno}: non-numeric vector component") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise FileFormatError(
                    f"{path}:{lineno}: dimension {len(vec)} != expected {dim}"
                )
            if token in vectors:
                raise FileFormatError(f"{path}:{lineno}: duplicate token {token!r}")
            vectors[token] = vec
    if dim is None:
        raise FileFormatError(f"{path}: empty embedding file")
    return EmbeddingTable(dim, vectors, oov_seed=oov_seed)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """a·b / (|a||b|); 0 when either norm is 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def query_embedding(table: EmbeddingTable, tokens) -> np.ndarray:
    """Mean of per-token lookups."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("query must have at least one token")
    return np.mean([table.lookup(t) for t in tokens], axis=0)
