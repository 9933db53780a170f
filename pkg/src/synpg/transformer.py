"""Transformer building blocks for the dual-encoder paraphrase models.

Pre-norm layers, sinusoidal (not learned) positional encoding, multi-head
attention, and a decoder whose cross-attention runs over the concatenation
of the two encoder memories. A learned segment vector is added to each
memory row so the decoder can tell semantic from syntactic positions. No
dropout inside layers; the only stochasticity in training is word dropout,
applied upstream.

The semantic side is encoded without positions, which makes it exactly
permutation-equivariant; the syntactic side and the decoder input get
positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (
    Rng,
    Tensor,
    add_bias,
    concat_rows,
    embedding,
    log_softmax_rows,
    layer_norm_rows,
    relu,
    slice_cols,
    softmax_rows,
)
from .tokenizer import BOS, EOS, MAX_LEN, PARSE, WORD

__all__ = [
    "ModelConfig",
    "EmbeddingSequence",
    "init_params",
    "param_count",
    "encoder_forward",
    "decoder_forward",
    "generate",
]


@dataclass(frozen=True)
class ModelConfig:
    """Shapes and wiring of one dual-encoder model.

    `sem_class`/`syn_class`/`out_class` choose the token classes of the
    semantic encoder, the syntactic encoder, and the decoder output: the
    paraphraser uses word/parse/word, the parse generator tag/parse/parse.
    """

    vocab_sizes: tuple  # ((class, size), ...) sorted
    d_model: int = 64
    n_heads: int = 4
    n_layers_enc_sem: int = 2
    n_layers_enc_syn: int = 2
    n_layers_dec: int = 2
    d_ffn: int = 256
    max_word_len: int = MAX_LEN[WORD]
    max_parse_len: int = MAX_LEN[PARSE]
    sem_class: str = WORD
    syn_class: str = PARSE
    out_class: str = WORD

    def __post_init__(self):
        object.__setattr__(self, "vocab_sizes", tuple(sorted(dict(self.vocab_sizes).items())))
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        for name in ("d_model", "n_heads", "n_layers_enc_sem", "n_layers_enc_syn",
                     "n_layers_dec", "d_ffn", "max_word_len", "max_parse_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for cls in (self.sem_class, self.syn_class, self.out_class):
            if cls not in dict(self.vocab_sizes):
                raise ValueError(f"no vocabulary size for class {cls!r}")

    def vocab_size(self, cls: str) -> int:
        return dict(self.vocab_sizes)[cls]

    def max_len(self, cls: str) -> int:
        return self.max_parse_len if cls == PARSE else self.max_word_len

    def to_dict(self) -> dict:
        return {
            "vocab_sizes": list(list(x) for x in self.vocab_sizes),
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_layers_enc_sem": self.n_layers_enc_sem,
            "n_layers_enc_syn": self.n_layers_enc_syn,
            "n_layers_dec": self.n_layers_dec,
            "d_ffn": self.d_ffn,
            "max_word_len": self.max_word_len,
            "max_parse_len": self.max_parse_len,
            "sem_class": self.sem_class,
            "syn_class": self.syn_class,
            "out_class": self.out_class,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["vocab_sizes"] = tuple(tuple(x) for x in d["vocab_sizes"])
        return cls(**d)


@dataclass
class EmbeddingSequence:
    """Encoder output: a length x d_model matrix plus its provenance."""

    matrix: Tensor
    provenance: str  # "semantic" | "syntactic"

    @property
    def length(self) -> int:
        return self.matrix.data.shape[0]


_SINUSOID_CACHE = {}


def _sinusoid_table(max_len: int, d: int) -> np.ndarray:
    key = (max_len, d)
    cached = _SINUSOID_CACHE.get(key)
    if cached is not None:
        return cached
    pos = np.arange(max_len)[:, None].astype(np.float64)
    dim = np.arange(0, d, 2).astype(np.float64)
    angle = pos / np.power(10000.0, dim / d)
    table = np.zeros((max_len, d))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    _SINUSOID_CACHE[key] = table
    return table


def param_count(cfg: ModelConfig) -> int:
    """Expected total parameter scalar count; checkpoints assert this.

    attention = 4*d*d + 3*d (query/value/output biases, no key bias);
    ffn = 2*d*f + f + d; layer_norm = 2*d. Encoder layer = attention + ffn +
    2 norms; decoder layer has two attentions and 3 norms. Each stack adds a
    final norm. Embeddings contribute V_cls*d per distinct class in use,
    plus two d-sized segment vectors; the output head is d*V_out + V_out.
    """
    d, f = cfg.d_model, cfg.d_ffn
    attn = 4 * d * d + 3 * d
    ffn = 2 * d * f + f + d
    ln = 2 * d
    enc_layer = attn + ffn + 2 * ln
    dec_layer = 2 * attn + ffn + 3 * ln
    total = 0
    total += cfg.n_layers_enc_sem * enc_layer + ln
    total += cfg.n_layers_enc_syn * enc_layer + ln
    total += cfg.n_layers_dec * dec_layer + ln
    for c in sorted({cfg.sem_class, cfg.syn_class, cfg.out_class}):
        total += cfg.vocab_size(c) * d
    total += 2 * d  # segment vectors
    total += d * cfg.vocab_size(cfg.out_class) + cfg.vocab_size(cfg.out_class)
    return total


def _xavier(rng: Rng, n_in: int, n_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform_array((n_in, n_out), -a, a)


def init_params(cfg: ModelConfig, rng: Rng) -> dict:
    """Fresh parameter dict keyed by dotted names, xavier/uniform init."""
    d, f = cfg.d_model, cfg.d_ffn
    params = {}

    def add(name, arr):
        params[name] = Tensor(arr, requires_grad=True)

    for c in sorted({cfg.sem_class, cfg.syn_class, cfg.out_class}):
        add(f"emb.{c}", rng.uniform_array((cfg.vocab_size(c), d), -0.1, 0.1))
    add("seg.sem", rng.uniform_array((d,), -0.1, 0.1))
    add("seg.syn", rng.uniform_array((d,), -0.1, 0.1))

    def add_attention(prefix):
        for w in ("wq", "wk", "wv", "wo"):
            add(f"{prefix}.{w}", _xavier(rng, d, d))
        # no key bias: softmax scores are shift-invariant in the keys, so a
        # key bias is a provably dead parameter
        for b in ("bq", "bv", "bo"):
            add(f"{prefix}.{b}", np.zeros(d))

    def add_ffn(prefix):
        add(f"{prefix}.w1", _xavier(rng, d, f))
        add(f"{prefix}.b1", np.zeros(f))
        add(f"{prefix}.w2", _xavier(rng, f, d))
        add(f"{prefix}.b2", np.zeros(d))

    def add_ln(prefix):
        add(f"{prefix}.g", np.ones(d))
        add(f"{prefix}.b", np.zeros(d))

    for stack, n_layers, is_dec in (
        ("sem", cfg.n_layers_enc_sem, False),
        ("syn", cfg.n_layers_enc_syn, False),
        ("dec", cfg.n_layers_dec, True),
    ):
        for i in range(n_layers):
            base = f"{stack}.{i}"
            add_ln(f"{base}.ln1")
            add_attention(f"{base}.attn")
            if is_dec:
                add_ln(f"{base}.ln2")
                add_attention(f"{base}.cross")
                add_ln(f"{base}.ln3")
            else:
                add_ln(f"{base}.ln2")
            add_ffn(f"{base}.ffn")
        add_ln(f"{stack}.final_ln")

    v_out = cfg.vocab_size(cfg.out_class)
    add("out.w", _xavier(rng, d, v_out))
    add("out.b", np.zeros(v_out))

    actual = sum(p.data.size for p in params.values())
    expected = param_count(cfg)
    assert actual == expected, f"parameter count {actual} != formula {expected}"
    return params


def _attention(q_in: Tensor, kv_in: Tensor, params: dict, prefix: str,
               cfg: ModelConfig, mask: Tensor | None = None) -> Tensor:
    """Multi-head scaled dot-product attention; mask is added to scores."""
    d = cfg.d_model
    dk = d // cfg.n_heads
    q = add_bias(q_in @ params[f"{prefix}.wq"], params[f"{prefix}.bq"])
    k = kv_in @ params[f"{prefix}.wk"]
    v = add_bias(kv_in @ params[f"{prefix}.wv"], params[f"{prefix}.bv"])
    scale = 1.0 / math.sqrt(dk)
    heads = []
    for h in range(cfg.n_heads):
        qh = slice_cols(q, h * dk, (h + 1) * dk)
        kh = slice_cols(k, h * dk, (h + 1) * dk)
        vh = slice_cols(v, h * dk, (h + 1) * dk)
        scores = (qh @ kh.T) * scale
        if mask is not None:
            scores = scores + mask
        heads.append(softmax_rows(scores) @ vh)
    ctx = heads[0]
    if len(heads) > 1:
        # column-concat via transpose of row-concat of transposes
        ctx = concat_rows([h.T for h in heads]).T
    return add_bias(ctx @ params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def _ln(x: Tensor, params: dict, prefix: str) -> Tensor:
    return layer_norm_rows(x, params[f"{prefix}.g"], params[f"{prefix}.b"])


def _ffn(x: Tensor, params: dict, prefix: str) -> Tensor:
    h = relu(add_bias(x @ params[f"{prefix}.w1"], params[f"{prefix}.b1"]))
    return add_bias(h @ params[f"{prefix}.w2"], params[f"{prefix}.b2"])


def _embed(ids, cls: str, params: dict, cfg: ModelConfig, use_positions: bool) -> Tensor:
    table = params[f"emb.{cls}"]
    x = embedding(table, list(ids)) * math.sqrt(cfg.d_model)
    if use_positions and len(ids):
        pe = _sinusoid_table(cfg.max_len(cls) + 2, cfg.d_model)[: len(ids)]
        x = x + Tensor(pe)
    return x


def encoder_forward(ids, params: dict, cfg: ModelConfig, side: str,
                    use_positions: bool) -> EmbeddingSequence:
    """Run one encoder stack ("sem" or "syn") over token ids.

    With use_positions=False no position signal enters anywhere, so the map
    is permutation-equivariant. Zero-length input short-circuits to an empty
    memory.
    """
    if side not in ("sem", "syn"):
        raise ValueError(f"unknown encoder side {side!r}")
    cls = cfg.sem_class if side == "sem" else cfg.syn_class
    ids = list(ids)
    if len(ids) > cfg.max_len(cls) + 1:  # +1 admits the EOS mark
        raise ValueError(f"{side} input of length {len(ids)} exceeds the limit")
    provenance = "semantic" if side == "sem" else "syntactic"
    if not ids:
        return EmbeddingSequence(Tensor(np.zeros((0, cfg.d_model))), provenance)
    n_layers = cfg.n_layers_enc_sem if side == "sem" else cfg.n_layers_enc_syn
    x = _embed(ids, cls, params, cfg, use_positions)
    for i in range(n_layers):
        base = f"{side}.{i}"
        normed = _ln(x, params, f"{base}.ln1")
        x = x + _attention(normed, normed, params, f"{base}.attn", cfg)
        x = x + _ffn(_ln(x, params, f"{base}.ln2"), params, f"{base}.ffn")
    x = _ln(x, params, f"{side}.final_ln")
    return EmbeddingSequence(x, provenance)


def _causal_mask(n: int) -> Tensor:
    m = np.triu(np.full((n, n), -1e30), k=1)  # finite stand-in for -inf
    return Tensor(m)


def decoder_forward(target_in_ids, mem_sem: EmbeddingSequence, mem_syn: EmbeddingSequence,
                    params: dict, cfg: ModelConfig) -> Tensor:
    """Logits over the output vocabulary for each target position.

    Causal self-attention over the shifted targets, then cross-attention
    over [semantic memory ; syntactic memory] with a segment vector added to
    each side. Step i depends only on targets <= i and the memories.
    """
    if mem_sem.matrix.data.shape[1] != cfg.d_model or mem_syn.matrix.data.shape[1] != cfg.d_model:
        raise ValueError("memory width does not match d_model")
    ids = list(target_in_ids)
    if not ids:
        raise ValueError("decoder needs at least one input token")
    parts = []
    if mem_sem.length:
        parts.append(add_bias(mem_sem.matrix, params["seg.sem"]))
    if mem_syn.length:
        parts.append(add_bias(mem_syn.matrix, params["seg.syn"]))
    if not parts:
        raise ValueError("both memories are empty")
    memory = concat_rows(parts) if len(parts) > 1 else parts[0]

    x = _embed(ids, cfg.out_class, params, cfg, use_positions=True)
    mask = _causal_mask(len(ids))
    for i in range(cfg.n_layers_dec):
        base = f"dec.{i}"
        normed = _ln(x, params, f"{base}.ln1")
        x = x + _attention(normed, normed, params, f"{base}.attn", cfg, mask=mask)
        x = x + _attention(_ln(x, params, f"{base}.ln2"), memory, params, f"{base}.cross", cfg)
        x = x + _ffn(_ln(x, params, f"{base}.ln3"), params, f"{base}.ffn")
    x = _ln(x, params, "dec.final_ln")
    return add_bias(x @ params["out.w"], params["out.b"])


def generate(mem_sem: EmbeddingSequence, mem_syn: EmbeddingSequence, params: dict,
             cfg: ModelConfig, strategy: str = "greedy", beam_size: int = 4,
             max_len: int | None = None, all_hypotheses: bool = False) -> list:
    """Decode output ids from BOS until EOS or max_len.

    Greedy takes the argmax with ties broken by lowest token id. Beam search
    ranks complete and partial hypotheses by total log-probability with
    lexicographic id tie-breaks, so beam(1) reproduces greedy exactly. With
    all_hypotheses=True, beam returns its ranked [(ids, logp), ...] instead
    of just the winner.
    """
    limit = cfg.max_len(cfg.out_class) if max_len is None else max_len
    if strategy == "greedy":
        ids = [BOS]
        out = []
        while len(out) < limit:
            logits = decoder_forward(ids, mem_sem, mem_syn, params, cfg)
            nxt = int(np.argmax(logits.data[-1]))  # np.argmax returns first max
            if nxt == EOS:
                break
            out.append(nxt)
            ids.append(nxt)
        return out
    if strategy != "beam":
        raise ValueError(f"unknown decoding strategy {strategy!r}")

    beams = [((), 0.0, False)]  # (emitted ids, total logp, finished)
    for _ in range(limit):
        candidates = []
        for ids, logp, done in beams:
            if done:
                candidates.append((ids, logp, True))
                continue
            logits = decoder_forward([BOS, *ids], mem_sem, mem_syn, params, cfg)
            logprobs = log_softmax_rows(logits).data[-1]
            for tok in range(len(logprobs)):
                cand = logp + float(logprobs[tok])
                if tok == EOS:
                    candidates.append((ids, cand, True))
                else:
                    candidates.append((ids + (tok,), cand, False))
        candidates.sort(key=lambda c: (-c[1], c[0]))
        beams = candidates[:beam_size]
        if all(done for _, _, done in beams):
            break
    ranked = sorted(beams, key=lambda c: (-c[1], c[0]))
    if all_hypotheses:
        return [(list(ids), logp) for ids, logp, _ in ranked]
    return list(ranked[0][0])
