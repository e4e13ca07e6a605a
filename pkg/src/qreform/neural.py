"""Neural building blocks: query/term encoders, term scorer, value network,
and the sequential term generator, all on the package's autodiff engine."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check  # noqa: F401  (grad_check re-exported)
from .embeddings import EmbeddingTable, PAD_TOKEN

_MAGIC = b"QRCK"
_FORMAT_VERSION = 1

MODEL_KINDS = ("ff", "cnn", "rnn", "rnn-seq")


@dataclass
class EncoderConfig:
    kind: str  # "ff" | "cnn" | "rnn"
    layers: int = 2
    windows: tuple[int, ...] = (3, 3)
    hidden: int = 0  # 0 = derive from model dim
    bidirectional: bool = True

    def __post_init__(self):
        if any(w % 2 == 0 for w in self.windows):
            raise ValueError(f"conv windows must be odd, got {self.windows}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")


@dataclass
class ModelConfig:
    kind: str = "cnn"  # "ff" | "cnn" | "rnn" | "rnn-seq"
    dim: int = 256
    window_radius: int = 4
    encoder_layers: int = 2
    query_windows: tuple[int, ...] = (3, 3)
    term_windows: tuple[int, ...] = (9, 3)
    bidirectional: bool = True

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")

    @property
    def encoder_kind(self) -> str:
        return "rnn" if self.kind == "rnn-seq" else self.kind

    def query_encoder(self) -> EncoderConfig:
        return EncoderConfig(
            kind=self.encoder_kind,
            layers=self.encoder_layers,
            windows=self.query_windows[: self.encoder_layers],
            bidirectional=self.bidirectional,
        )

    def term_encoder(self) -> EncoderConfig:
        return EncoderConfig(
            kind=self.encoder_kind,
            layers=self.encoder_layers,
            windows=self.term_windows[: self.encoder_layers],
            bidirectional=self.bidirectional,
        )


class Parameters:
    """Insertion-ordered name -> Tensor store with seeded initialization."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._tensors: dict[str, Tensor] = {}

    def uniform(self, name: str, shape, fan_in: int) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return self._register(name, self._rng.uniform(-bound, bound, size=shape))

    def zeros(self, name: str, shape=()) -> Tensor:
        return self._register(name, np.zeros(shape))

    def attach(self, name: str, array: np.ndarray) -> Tensor:
        """Wrap an existing buffer (shared, updated in place by the optimizer)."""
        return self._register(name, array)

    def _register(self, name: str, array) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(array)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def items(self):
        return self._tensors.items()

    def names(self) -> list[str]:
        return list(self._tensors)

    def subset(self, predicate) -> dict[str, Tensor]:
        return {n: t for n, t in self._tensors.items() if predicate(n)}

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None


def _lstm_gate_names():
    return ("i", "f", "o")


class _LstmCell:
    """One LSTM direction: per-gate input/hidden weights plus biases."""

    def __init__(self, params: Parameters, prefix: str, in_dim: int, hidden: int):
        self.hidden = hidden
        self.w_x = {}
        self.w_h = {}
        self.bias = {}
        for gate in ("i", "f", "g", "o"):
            self.w_x[gate] = params.uniform(f"{prefix}.Wx_{gate}", (in_dim, hidden), in_dim)
            self.w_h[gate] = params.uniform(f"{prefix}.Wh_{gate}", (hidden, hidden), hidden)
            self.bias[gate] = params.zeros(f"{prefix}.b_{gate}", (hidden,))

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        pre = {
            gate: ad.affine(x, self.w_x[gate], self.bias[gate]) + ad.affine(h, self.w_h[gate])
            for gate in ("i", "f", "g", "o")
        }
        i = ad.sigmoid(pre["i"])
        f = ad.sigmoid(pre["f"])
        g = ad.tanh(pre["g"])
        o = ad.sigmoid(pre["o"])
        c_next = f * c + i * g
        h_next = o * ad.tanh(c_next)
        return h_next, c_next

    def run(self, xs: list[Tensor], lead_shape) -> list[Tensor]:
        h = Tensor(np.zeros(lead_shape + (self.hidden,)))
        c = Tensor(np.zeros(lead_shape + (self.hidden,)))
        outs = []
        for x in xs:
            h, c = self.step(x, h, c)
            outs.append(h)
        return outs


class _LstmEncoder:
    def __init__(self, params: Parameters, prefix: str, in_dim: int, out_dim: int, cfg: EncoderConfig):
        self.cfg = cfg
        if cfg.bidirectional:
            if out_dim % 2 != 0:
                raise ValueError("bidirectional LSTM needs an even output dim")
            hidden = out_dim // 2
        else:
            hidden = out_dim
        self.layers = []
        dim = in_dim
        for layer in range(cfg.layers):
            fwd = _LstmCell(params, f"{prefix}.l{layer}.fwd", dim, hidden)
            bwd = _LstmCell(params, f"{prefix}.l{layer}.bwd", dim, hidden) if cfg.bidirectional else None
            self.layers.append((fwd, bwd))
            dim = out_dim

    def encode(self, xs: list[Tensor], lead_shape) -> Tensor:
        """Final hidden state; for bidirectional, forward and backward concatenated."""
        seq = xs
        for fwd, bwd in self.layers:
            f_out = fwd.run(seq, lead_shape)
            if bwd is None:
                seq = f_out
                last = f_out[-1]
            else:
                b_out = bwd.run(list(reversed(seq)), lead_shape)
                last = ad.concat([f_out[-1], b_out[-1]], axis=-1)
                b_out = list(reversed(b_out))
                seq = [ad.concat([f, b], axis=-1) for f, b in zip(f_out, b_out)]
        return last


class _ConvEncoder:
    def __init__(self, params: Parameters, prefix: str, in_dim: int, out_dim: int, cfg: EncoderConfig):
        self.cfg = cfg
        self.weights = []
        dim = in_dim
        for layer, window in enumerate(cfg.windows):
            w = params.uniform(f"{prefix}.l{layer}.W", (window * dim, out_dim), window * dim)
            b = params.zeros(f"{prefix}.l{layer}.b", (out_dim,))
            self.weights.append((window, w, b))
            dim = out_dim

    def encode(self, x: Tensor, time_axis: int) -> Tensor:
        for window, w, b in self.weights:
            x = ad.tanh(ad.affine(ad.sliding_windows(x, window), w, b))
        return ad.tmax(x, axis=time_axis)


class _FeedForwardEncoder:
    def __init__(self, params: Parameters, prefix: str, in_dim: int, out_dim: int):
        self.w = params.uniform(f"{prefix}.W", (in_dim, out_dim), in_dim)
        self.b = params.zeros(f"{prefix}.b", (out_dim,))

    def encode(self, x: Tensor, time_axis: int) -> Tensor:
        return ad.tmean(ad.tanh(ad.affine(x, self.w, self.b)), axis=time_axis)


class PolicyModel:
    """Term scorer, value network, and optional sequence generator over a
    fixed embedding table (only the OOV vector trains)."""

    def __init__(self, config: ModelConfig, table: EmbeddingTable, seed: int = 0):
        if table.dim != config.dim:
            raise ValueError(f"embedding dim {table.dim} != model dim {config.dim}")
        self.config = config
        self.table = table
        self.params = Parameters(np.random.default_rng(seed))
        d = config.dim

        # Own copy of the OOV row: fresh models must not inherit another
        # model's training updates through a shared table.
        self.oov = self.params.attach("emb.oov", table.oov_vector.copy())
        self._q_enc = self._make_encoder("q_enc", config.query_encoder(), d)
        self._t_enc = self._make_encoder("t_enc", config.term_encoder(), d)

        self.score_w = self.params.uniform("score.W", (2 * d, d), 2 * d)
        self.score_u = self.params.uniform("score.U", (d,), d)
        self.score_b = self.params.zeros("score.b")

        self.value_v = self.params.uniform("value.V", (2 * d, d), 2 * d)
        self.value_s = self.params.uniform("value.S", (d,), d)
        self.value_b = self.params.zeros("value.b")

        if config.kind == "rnn-seq":
            self.gen_wa = self.params.uniform("gen.Wa", (d, d), d)
            self.gen_wb = self.params.uniform("gen.Wb", (d, d), d)
            self.gen_wh = self.params.uniform("gen.Wh", (d, d), d)
            self.gen_gates = {}
            for gate in _lstm_gate_names():
                self.gen_gates[gate] = (
                    self.params.uniform(f"gen.Wa_{gate}", (d, d), d),
                    self.params.uniform(f"gen.Wb_{gate}", (d, d), d),
                    self.params.uniform(f"gen.Wh_{gate}", (d, d), d),
                    self.params.zeros(f"gen.b_{gate}", (d,)),
                )
            self.gen_start = self.params.uniform("gen.start", (d,), d)
            self.gen_stop = self.params.uniform("gen.stop", (d,), d)

    def _make_encoder(self, prefix: str, cfg: EncoderConfig, d: int):
        if cfg.kind == "ff":
            return _FeedForwardEncoder(self.params, prefix, d, d)
        if cfg.kind == "cnn":
            return _ConvEncoder(self.params, prefix, d, d, cfg)
        if cfg.kind == "rnn":
            return _LstmEncoder(self.params, prefix, d, d, cfg)
        raise ValueError(f"unknown encoder kind {cfg.kind!r}")

    # -- embedding ----------------------------------------------------------

    def embed_tokens(self, tokens) -> Tensor:
        """(T, d) embedding matrix; OOV rows share the learnable OOV vector."""
        t_len = len(tokens)
        base = np.zeros((t_len, self.config.dim))
        mask = np.zeros((t_len, 1))
        for i, tok in enumerate(tokens):
            if tok == PAD_TOKEN:
                continue
            vec = self.table.vectors.get(tok)
            if vec is None:
                mask[i, 0] = 1.0
            else:
                base[i] = vec
        return Tensor(base) + Tensor(mask) * self.oov

    def embed_windows(self, contexts) -> Tensor:
        """(n, window, d) embeddings for candidate context windows."""
        n = len(contexts)
        width = len(contexts[0])
        base = np.zeros((n, width, self.config.dim))
        mask = np.zeros((n, width, 1))
        for i, ctx in enumerate(contexts):
            for j, tok in enumerate(ctx):
                if tok == PAD_TOKEN:
                    continue
                vec = self.table.vectors.get(tok)
                if vec is None:
                    mask[i, j, 0] = 1.0
                else:
                    base[i, j] = vec
        return Tensor(base) + Tensor(mask) * self.oov

    # -- encoders ------------------------------------------------------------

    def encode_query(self, tokens) -> Tensor:
        """Fixed-size query representation (d,)."""
        tokens = list(tokens)
        if not tokens:
            raise ValueError("cannot encode an empty query")
        x = self.embed_tokens(tokens)
        if isinstance(self._q_enc, _LstmEncoder):
            xs = [ad.gather(x, i) for i in range(len(tokens))]
            return self._q_enc.encode(xs, ())
        return self._q_enc.encode(x, time_axis=0)

    def encode_terms(self, pool) -> Tensor:
        """(n, d) representations of candidate terms with their context windows."""
        terms = pool.terms if hasattr(pool, "terms") else list(pool)
        if not terms:
            raise ValueError("cannot encode an empty candidate pool")
        x = self.embed_windows([t.context for t in terms])
        if isinstance(self._t_enc, _LstmEncoder):
            width = x.shape[1]
            xs = [ad.gather(ad.reshape(x, (x.shape[0] * width, x.shape[2])),
                            np.arange(len(terms)) * width + j)
                  for j in range(width)]
            return self._t_enc.encode(xs, (len(terms),))
        return self._t_enc.encode(x, time_axis=1)

    # -- heads ---------------------------------------------------------------

    def score_terms(self, query_vec: Tensor, term_vecs: Tensor) -> Tensor:
        """Per-term selection probabilities, each strictly inside (0, 1)."""
        n = term_vecs.shape[0]
        tiled = Tensor(np.ones((n, 1))) * query_vec
        both = ad.concat([tiled, term_vecs], axis=1)
        hidden = ad.tanh(ad.affine(both, self.score_w, self.score_b))
        return ad.sigmoid(hidden @ self.score_u)

    def value_estimate(self, query_vec: Tensor, term_vecs: Tensor) -> Tensor:
        """Expected-reward estimate from the mean candidate representation."""
        if term_vecs.shape[0] < 1:
            raise ValueError("value estimate needs a non-empty pool")
        mean_term = ad.tmean(term_vecs, axis=0)
        both = ad.concat([query_vec, mean_term], axis=0)
        hidden = ad.tanh(ad.affine(both, self.value_v, self.value_b))
        return ad.sigmoid(hidden @ self.value_s)

    # -- sequence generator ----------------------------------------------------

    def seq_state0(self) -> tuple[Tensor, Tensor]:
        d = self.config.dim
        return Tensor(np.zeros(d)), Tensor(np.zeros(d))

    def seq_step(
        self,
        query_vec: Tensor,
        prev_term_vec: Tensor | None,
        h: Tensor,
        c: Tensor,
        plain: bool = False,
    ) -> tuple[Tensor, Tensor]:
        """One generator step. `plain=True` collapses the gated update to
        h' = tanh(Wa q + Wb t_prev + Wh h), leaving the cell untouched."""
        if prev_term_vec is None:
            prev_term_vec = self.gen_start
        pre = (
            ad.affine(query_vec, self.gen_wa)
            + ad.affine(prev_term_vec, self.gen_wb)
            + ad.affine(h, self.gen_wh)
        )
        cand = ad.tanh(pre)
        if plain:
            return cand, c
        gates = {}
        for gate, (wa, wb, wh, b) in self.gen_gates.items():
            gates[gate] = ad.sigmoid(
                ad.affine(query_vec, wa, b)
                + ad.affine(prev_term_vec, wb)
                + ad.affine(h, wh)
            )
        c_next = gates["f"] * c + gates["i"] * cand
        h_next = gates["o"] * ad.tanh(c_next)
        return h_next, c_next

    def seq_term_probs(self, h: Tensor, term_vecs: Tensor) -> Tensor:
        """Softmax over candidates plus the stop action (stop is the last entry)."""
        logits = ad.concat([term_vecs @ h, ad.reshape(self.gen_stop @ h, (1,))], axis=0)
        return ad.softmax(logits)

    # -- parameter groups ------------------------------------------------------

    def policy_params(self) -> dict[str, Tensor]:
        return self.params.subset(lambda n: not n.startswith("value."))

    def value_params(self) -> dict[str, Tensor]:
        return self.params.subset(lambda n: n.startswith("value."))


def save_checkpoint(path, model: PolicyModel) -> None:
    """Persist model config and parameters as a versioned binary checkpoint."""
    cfg = model.config
    names = model.params.names()
    manifest = {
        "config": {
            "kind": cfg.kind,
            "dim": cfg.dim,
            "window_radius": cfg.window_radius,
            "encoder_layers": cfg.encoder_layers,
            "query_windows": list(cfg.query_windows),
            "term_windows": list(cfg.term_windows),
            "bidirectional": cfg.bidirectional,
        },
        "tensors": [[n, list(model.params[n].data.shape)] for n in names],
    }
    blob = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n].data).tobytes())


def load_checkpoint(path, table: EmbeddingTable) -> PolicyModel:
    """Load a checkpoint, validating header, version, and tensor shapes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        version, blob_len = struct.unpack("<II", fh.read(8))
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        manifest = json.loads(fh.read(blob_len).decode("utf-8"))
        cfg_d = manifest["config"]
        config = ModelConfig(
            kind=cfg_d["kind"],
            dim=cfg_d["dim"],
            window_radius=cfg_d["window_radius"],
            encoder_layers=cfg_d["encoder_layers"],
            query_windows=tuple(cfg_d["query_windows"]),
            term_windows=tuple(cfg_d["term_windows"]),
            bidirectional=cfg_d["bidirectional"],
        )
        model = PolicyModel(config, table)
        for name, shape in manifest["tensors"]:
            shape = tuple(shape)
            if name not in model.params:
                raise ValueError(f"{path}: unexpected tensor {name!r}")
            tensor = model.params[name]
            if tensor.data.shape != shape:
                raise ValueError(
                    f"{path}: tensor {name} shape {shape} != expected {tensor.data.shape}"
                )
            raw = fh.read(int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8)
            tensor.data[...] = np.frombuffer(raw, dtype=np.float64).reshape(shape)
    return model
