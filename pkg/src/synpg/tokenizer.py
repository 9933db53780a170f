"""Word-level vocabulary and bidirectional text/id encoding.

Three token classes share one Vocab: sentence words (lowercased), parse
tokens ("(S", ")"), and POS tags. Ids 0..3 are reserved in every class for
PAD/BOS/EOS/UNK. Bags erase token order by canonical ascending-id sort; the
semantic encoder is permutation-equivariant, so any fixed order works and
sorting keeps everything deterministic.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .parsekit import linearize, parse_ptb_line, tag_sequence

__all__ = [
    "PAD", "BOS", "EOS", "UNK",
    "RESERVED_TOKENS",
    "WORD", "PARSE", "TAG", "CLASSES", "MAX_LEN",
    "Vocab", "TokenSequence", "BagOfTokens",
    "build_vocab", "encode", "decode", "to_bag",
]

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

WORD, PARSE, TAG = "word", "parse", "tag"
CLASSES = (WORD, PARSE, TAG)
MAX_LEN = {WORD: 40, PARSE: 160, TAG: 40}


@dataclass(frozen=True)
class TokenSequence:
    """Ordered token ids of one class."""

    ids: tuple
    cls: str

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise ValueError(f"unknown token class {self.cls!r}")
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class BagOfTokens:
    """Order-erased token ids, kept in canonical ascending order."""

    ids: tuple
    cls: str
    orderless: bool = field(default=True)

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(sorted(int(i) for i in self.ids)))

    def __len__(self):
        return len(self.ids)


class Vocab:
    """Immutable id/string tables for the three token classes."""

    def __init__(self, tables: dict):
        self._tokens = {}
        self._index = {}
        for cls in CLASSES:
            toks = list(tables.get(cls, ()))
            if tuple(toks[:4]) != RESERVED_TOKENS:
                raise ValueError(f"{cls} table must start with the reserved tokens")
            index = {t: i for i, t in enumerate(toks)}
            if len(index) != len(toks):
                raise ValueError(f"duplicate tokens in {cls} table")
            self._tokens[cls] = tuple(toks)
            self._index[cls] = index

    def size(self, cls: str) -> int:
        return len(self._tokens[cls])

    def tokens(self, cls: str) -> tuple:
        return self._tokens[cls]

    def id_of(self, cls: str, token: str) -> int:
        return self._index[cls].get(token, UNK)

    def token_of(self, cls: str, idx: int) -> str:
        return self._tokens[cls][idx]

    def __eq__(self, other):
        return isinstance(other, Vocab) and self._tokens == other._tokens

    def dump_lines(self, cls: str) -> list:
        """Inspection dump, one "id<TAB>token" line per entry."""
        return [f"{i}\t{t}" for i, t in enumerate(self._tokens[cls])]


def _ranked(counts: Counter, min_count: int = 1, max_size: int | None = None) -> list:
    kept = [(t, c) for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    if max_size is not None:
        kept = kept[:max_size]
    return list(RESERVED_TOKENS) + [t for t, _ in kept]


def build_vocab(lines, min_count: int = 1, max_size: int | None = None) -> Vocab:
    """Build all three token tables from an iterable of PTB tree lines.

    Words are lowercased and ranked by frequency (ties broken
    lexicographically); `min_count` and `max_size` apply to the word class
    only, since parse and tag inventories are small and closed.
    """
    word_counts = Counter()
    parse_counts = Counter()
    tag_counts = Counter()
    n_lines = 0
    for line in lines:
        line = line.strip()
        if not line:
            continue
        n_lines += 1
        tree = parse_ptb_line(line)
        word_counts.update(w.lower() for w in tree.words())
        parse_counts.update(linearize(tree))
        tag_counts.update(tag_sequence(tree))
    if n_lines == 0:
        raise ValueError("empty corpus")
    return Vocab({
        WORD: _ranked(word_counts, min_count, max_size),
        PARSE: _ranked(parse_counts),
        TAG: _ranked(tag_counts),
    })


def encode(tokens, vocab: Vocab, cls: str, stats: dict | None = None) -> TokenSequence:
    """Map tokens to ids; OOV becomes UNK, overlength input is truncated.

    Truncations increment stats["truncated_<cls>"] when a stats dict is
    supplied. BOS/EOS are added by model-side collation, never here.
    """
    if cls == WORD:
        tokens = [t.lower() for t in tokens]
    else:
        tokens = list(tokens)
    limit = MAX_LEN[cls]
    if len(tokens) > limit:
        if stats is not None:
            stats[f"truncated_{cls}"] = stats.get(f"truncated_{cls}", 0) + 1
        tokens = tokens[:limit]
    return TokenSequence(tuple(vocab.id_of(cls, t) for t in tokens), cls)


def decode(seq, vocab: Vocab, cls: str | None = None) -> list:
    """Ids back to token strings; accepts a TokenSequence/Bag or raw ids."""
    if cls is None:
        cls = seq.cls
    ids = seq.ids if hasattr(seq, "ids") else seq
    return [vocab.token_of(cls, i) for i in ids]


def to_bag(seq: TokenSequence) -> BagOfTokens:
    """Erase order: same multiset, canonical ascending order.

    Defined for word and tag sequences (the two encoder-side bag inputs);
    parse tokens are inherently ordered and are rejected.
    """
    if seq.cls == PARSE:
        raise ValueError("parse token sequences cannot be bagged")
    return BagOfTokens(seq.ids, seq.cls)
