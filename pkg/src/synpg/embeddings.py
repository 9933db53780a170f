"""Optional pretrained word embeddings: a text-format loader and a small
co-occurrence pretrainer.

The loader reads the common whitespace format, one token per line::

    word 0.12 -0.03 0.88 ...

The pretrainer factorizes a positive PMI co-occurrence matrix built from a
parsed corpus (symmetric window over sentence yields) with an SVD, which is
a desk-scale stand-in for distributional embeddings trained on big corpora.
Initializing the word table this way typically speeds up reconstruction
training; it changes nothing about the model architecture.
"""

from __future__ import annotations

import math

import numpy as np

from .tokenizer import RESERVED_TOKENS, WORD, Vocab

__all__ = [
    "load_embedding_file",
    "format_embedding_lines",
    "pretrain_word_embeddings",
    "apply_word_embeddings",
]


def load_embedding_file(path) -> dict:
    """Read "word v1 v2 ..." lines into {word: float64 vector}.

    All vectors must share one dimension; malformed lines raise ValueError.
    """
    table = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"line {lineno}: expected a word and at least one value")
            word = parts[0]
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric embedding value") from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ValueError(f"line {lineno}: dimension {vec.size} != {dim}")
            table[word] = vec
    if not table:
        raise ValueError("embedding file holds no vectors")
    return table


def format_embedding_lines(table: dict) -> str:
    """Inverse of load_embedding_file, rows sorted by word."""
    lines = []
    for word in sorted(table):
        values = " ".join(f"{v:.6f}" for v in table[word])
        lines.append(f"{word} {values}")
    return "\n".join(lines) + "\n"


def pretrain_word_embeddings(sentences, dim: int, window: int = 3,
                             scale: float = 0.1) -> dict:
    """Positive-PMI co-occurrence factorization over tokenized sentences.

    Rows are rescaled so their RMS matches `scale`, the magnitude of the
    random initialization they replace.
    """
    sentences = [[w.lower() for w in s] for s in sentences]
    words = sorted({w for s in sentences for w in s})
    if not words:
        raise ValueError("no sentences to pretrain on")
    index = {w: i for i, w in enumerate(words)}
    n = len(words)
    cooc = np.zeros((n, n))
    for sent in sentences:
        for i, w in enumerate(sent):
            for j in range(max(0, i - window), min(len(sent), i + window + 1)):
                if i != j:
                    cooc[index[w], index[sent[j]]] += 1.0
    total = cooc.sum()
    if total == 0:
        raise ValueError("no co-occurrences within the window")
    row = cooc.sum(axis=1, keepdims=True)
    col = cooc.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(cooc * total / (row @ col))
    pmi[~np.isfinite(pmi)] = 0.0
    pmi[pmi < 0.0] = 0.0
    u, s, _ = np.linalg.svd(pmi, full_matrices=False)
    k = min(dim, u.shape[1])
    vectors = u[:, :k] * np.sqrt(s[:k])
    if k < dim:
        vectors = np.concatenate([vectors, np.zeros((n, dim - k))], axis=1)
    rms = math.sqrt(float((vectors ** 2).mean()))
    if rms > 0:
        vectors = vectors * (scale / rms)
    return {w: vectors[i] for w, i in index.items()}


def apply_word_embeddings(model, table: dict) -> int:
    """Overwrite word-embedding rows for words found in `table`.

    Reserved tokens keep their random rows. Returns how many rows changed;
    raises on dimension mismatch.
    """
    emb = model.params[f"emb.{WORD}"]
    vocab: Vocab = model.vocab
    d = emb.data.shape[1]
    applied = 0
    for idx, token in enumerate(vocab.tokens(WORD)):
        if token in RESERVED_TOKENS:
            continue
        vec = table.get(token)
        if vec is None:
            continue
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (d,):
            raise ValueError(f"embedding for {token!r} has shape {vec.shape}, expected ({d},)")
        emb.data[idx] = vec
        applied += 1
    return applied


def warm_start(model, sentences=None) -> int:
    """Convergence-friendly initialization for reconstruction training.

    Three pieces, all architecture-neutral: word embeddings pretrained on
    the training sentences (when the model consumes words and sentences are
    given), the output projection started at the transpose of the output
    embedding table so logits begin as embedding similarities, and identity
    value/output projections in the decoder's cross-attention so attended
    memory content reaches the residual stream unchanged from step one.
    Together these let the copy circuit work almost immediately, which
    matters at small fixed learning rates. Returns the number of pretrained
    rows applied.
    """
    applied = 0
    if sentences is not None and model.config.sem_class == WORD:
        table = pretrain_word_embeddings(sentences, dim=model.config.d_model)
        applied = apply_word_embeddings(model, table)
    out_emb = model.params[f"emb.{model.config.out_class}"]
    model.params["out.w"].data = out_emb.data.T.copy()
    d = model.config.d_model
    for name in model.params:
        if ".cross." in name and (name.endswith(".wv") or name.endswith(".wo")):
            model.params[name].data = np.eye(d)
    return applied
