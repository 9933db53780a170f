"""The paraphraser and parse-generator assemblies and their training loop.

Both models share one architecture: a position-free semantic encoder over a
token bag, a position-aware syntactic encoder over parse tokens, and a
decoder attending to both memories. The paraphraser reconstructs a sentence
from (word bag, own parse); the parse generator reconstructs a full parse
from (POS tag bag, template). Training needs nothing but parsed text.

Word dropout removes tokens from the semantic bag only; the reconstruction
target stays the full sentence, which is what forces the model to predict
missing words instead of copying. The non-disentangled ablation feeds the
ordered sentence with positions and no dropout, and learns to copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .numerics import AdamState, Rng, Tensor, adam_step, backward, cross_entropy, zero_grads
from .parsekit import LinearizedParse, ParseTree, linearize
from .tokenizer import (
    BOS,
    EOS,
    PAD,
    PARSE,
    TAG,
    WORD,
    BagOfTokens,
    TokenSequence,
    Vocab,
    decode,
    encode,
    to_bag,
)
from .transformer import (
    ModelConfig,
    decoder_forward,
    encoder_forward,
    generate,
    init_params,
)

__all__ = [
    "TrainingConfig",
    "TrainReport",
    "GenerationError",
    "SynPGModel",
    "ParseGeneratorModel",
    "word_dropout",
    "reconstruction_loss",
    "train",
    "train_parse_generator",
]


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    epochs: int = 5
    word_dropout: float = 0.4
    batch_size: int = 1
    seed: int = 0
    max_word_len: int = 40
    max_parse_len: int = 160
    # dropout is resampled at every visit of an example by default; set False
    # to freeze one mask per example across epochs
    resample_dropout: bool = True

    def __post_init__(self):
        if not 0.0 <= self.word_dropout <= 1.0:
            raise ValueError("word_dropout must lie in [0, 1]")
        for name in ("learning_rate", "epochs", "batch_size", "max_word_len", "max_parse_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class TrainReport:
    """Loss curve rows (epoch, step, loss) plus per-epoch means.

    `truncations` counts inputs clipped to the class length limits during
    example encoding (empty when nothing was clipped).
    """

    rows: list = field(default_factory=list)
    epoch_means: list = field(default_factory=list)
    truncations: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["epoch,step,loss"]
        lines += [f"{e},{s},{v:.10f}" for e, s, v in self.rows]
        return "\n".join(lines) + "\n"

    @property
    def final_loss(self) -> float:
        return self.rows[-1][2] if self.rows else float("nan")


class GenerationError(RuntimeError):
    """Decoded parse stayed unbalanced after the beam retry."""


def word_dropout(bag: BagOfTokens, rate: float, rng: Rng) -> BagOfTokens:
    """Remove each token independently with probability `rate`.

    Empty results are kept; the decoder then works from syntax alone.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("dropout rate must lie in [0, 1]")
    kept = tuple(i for i in bag.ids if rng.uniform() >= rate)
    return BagOfTokens(kept, bag.cls)


class _DualSeq2Seq:
    """Shared state and forward paths of the two model kinds."""

    kind = "?"

    def __init__(self, config: ModelConfig, params: dict, vocab: Vocab,
                 disentangled: bool = True):
        self.config = config
        self.params = params
        self.vocab = vocab
        self.disentangled = bool(disentangled)

    @classmethod
    def build(cls, vocab: Vocab, seed: int = 0, disentangled: bool = True, **overrides):
        sizes = tuple((c, vocab.size(c)) for c in (WORD, PARSE, TAG))
        cfg = ModelConfig(vocab_sizes=sizes, sem_class=cls.SEM_CLASS,
                          syn_class=cls.SYN_CLASS, out_class=cls.OUT_CLASS, **overrides)
        return cls(cfg, init_params(cfg, Rng(seed)), vocab, disentangled)

    def parameter_names(self) -> list:
        return sorted(self.params)

    def parameters(self) -> list:
        return [self.params[n] for n in self.parameter_names()]

    def encode_semantic(self, ids, ordered: bool):
        """Semantic memory: bag without positions, or ordered with positions
        for the non-disentangled ablation."""
        return encoder_forward(ids, self.params, self.config, "sem", use_positions=ordered)

    def encode_syntactic(self, ids):
        return encoder_forward(ids, self.params, self.config, "syn", use_positions=True)

    def _semantic_ids(self, seq: TokenSequence, rng: Rng | None, rate: float):
        """Ids entering the semantic encoder plus the `ordered` flag."""
        if not self.disentangled:
            return list(seq.ids), True
        bag = to_bag(seq)
        if rng is not None and rate > 0.0:
            bag = word_dropout(bag, rate, rng)
        return list(bag.ids), False

    def _loss(self, sem_seq: TokenSequence, syn_ids, out_ids, rng: Rng | None,
              rate: float) -> Tensor:
        if not out_ids:
            raise ValueError("empty target sequence")
        sem_ids, ordered = self._semantic_ids(sem_seq, rng, rate)
        mem_sem = self.encode_semantic(sem_ids, ordered)
        mem_syn = self.encode_syntactic(list(syn_ids) + [EOS])
        dec_in = [BOS, *out_ids]
        targets = [*out_ids, EOS]
        logits = decoder_forward(dec_in, mem_sem, mem_syn, self.params, self.config)
        return cross_entropy(logits, targets, ignore_index=PAD)

    def _generate(self, sem_ids, ordered, syn_ids, strategy, beam_size, max_len=None,
                  all_hypotheses=False):
        mem_sem = self.encode_semantic(sem_ids, ordered)
        mem_syn = self.encode_syntactic(list(syn_ids) + [EOS])
        return generate(mem_sem, mem_syn, self.params, self.config, strategy=strategy,
                        beam_size=beam_size, max_len=max_len, all_hypotheses=all_hypotheses)


class SynPGModel(_DualSeq2Seq):
    """Paraphrase generator: (word bag, linearized parse) -> sentence."""

    kind = "SYNPG"
    SEM_CLASS, SYN_CLASS, OUT_CLASS = WORD, PARSE, WORD

    def paraphrase(self, words, target_parse, strategy: str = "greedy", beam_size: int = 4,
                   disentangled: bool | None = None, allow_mode_mismatch: bool = False):
        """Decode a paraphrase of `words` following `target_parse`.

        No dropout at inference. Requesting the mode the checkpoint was not
        trained in raises unless allow_mode_mismatch is set.
        """
        mode = self.disentangled if disentangled is None else bool(disentangled)
        if mode != self.disentangled and not allow_mode_mismatch:
            raise ValueError(
                f"model was trained with disentangled={self.disentangled}; "
                "pass allow_mode_mismatch=True to override")
        if isinstance(target_parse, ParseTree):
            target_parse = linearize(target_parse)
        elif not isinstance(target_parse, LinearizedParse):
            target_parse = LinearizedParse(target_parse)  # validates balance
        seq = words if isinstance(words, TokenSequence) else encode(words, self.vocab, WORD)
        if mode:
            sem_ids, ordered = list(to_bag(seq).ids), False
        else:
            sem_ids, ordered = list(seq.ids), True
        syn_ids = encode(list(target_parse), self.vocab, PARSE).ids
        out = self._generate(sem_ids, ordered, syn_ids, strategy, beam_size,
                             max_len=self.config.max_word_len)
        return decode(out, self.vocab, WORD)


class ParseGeneratorModel(_DualSeq2Seq):
    """Parse generator: (POS tag bag, template) -> full linearized parse."""

    kind = "PARSEGEN"
    SEM_CLASS, SYN_CLASS, OUT_CLASS = TAG, PARSE, PARSE

    def generate_full_parse(self, tags, template, strategy: str = "greedy"):
        """Decode a full parse for a tag multiset under a template.

        The output must delinearize; unbalanced greedy output is retried once
        with beam(4) (taking its best balanced hypothesis) and then rejected
        with GenerationError.
        """
        if isinstance(template, ParseTree):
            template = linearize(template)
        elif not isinstance(template, LinearizedParse):
            template = LinearizedParse(template)
        tag_seq = tags if isinstance(tags, TokenSequence) else encode(tags, self.vocab, TAG)
        sem_ids = list(to_bag(tag_seq).ids)
        syn_ids = encode(list(template), self.vocab, PARSE).ids

        def try_tokens(ids):
            tokens = decode(ids, self.vocab, PARSE)
            return LinearizedParse(tokens)  # raises StructureError if unbalanced

        from .parsekit import StructureError

        ids = self._generate(sem_ids, False, syn_ids, strategy, beam_size=4,
                             max_len=self.config.max_parse_len)
        try:
            return try_tokens(ids)
        except StructureError:
            pass
        ranked = self._generate(sem_ids, False, syn_ids, "beam", beam_size=4,
                                max_len=self.config.max_parse_len, all_hypotheses=True)
        for cand_ids, _ in ranked:
            try:
                return try_tokens(list(cand_ids))
            except StructureError:
                continue
        raise GenerationError("generated parse is unbalanced after beam retry")


def reconstruction_loss(model: _DualSeq2Seq, sentence: TokenSequence, parse,
                        rng: Rng | None, train_cfg: TrainingConfig) -> Tensor:
    """Teacher-forced mean token NLL of reconstructing `sentence`.

    Disentangled models see word_dropout(bag(sentence)); the ablation sees
    the ordered sentence with positions and no dropout. The target is always
    the full sentence.
    """
    if len(sentence) == 0:
        raise ValueError("empty sentence")
    if isinstance(parse, (LinearizedParse, list, tuple)):
        parse_ids = encode(list(parse), model.vocab, PARSE).ids
    else:
        parse_ids = parse.ids
    return model._loss(sentence, parse_ids, list(sentence.ids), rng, train_cfg.word_dropout)


def _normalize_corpus(corpus):
    """Accept trees or (words, tree) pairs; emit (words, tree)."""
    out = []
    for item in corpus:
        if isinstance(item, ParseTree):
            out.append((item.words(), item))
        else:
            words, tree = item
            out.append((list(words), tree))
    return out


def _run_training(model: _DualSeq2Seq, examples, cfg: TrainingConfig,
                  dropout_on_sem: bool) -> TrainReport:
    """Shared loop: shuffled batches, gradient accumulation, Adam updates.

    `examples` is a list of (sem_seq, syn_ids, out_ids). Deterministic for a
    fixed seed: one stream orders batches, a second one drives dropout.
    """
    if not examples:
        raise ValueError("empty training corpus")
    names = model.parameter_names()
    params = [model.params[n] for n in names]
    opt = AdamState(params, learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)
    root = Rng(cfg.seed)
    order_rng = root.fork(1)
    drop_rng = root.fork(2)
    rate = cfg.word_dropout if dropout_on_sem else 0.0

    report = TrainReport()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = list(range(len(examples)))
        order_rng.shuffle(order)
        epoch_total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            zero_grads(params)
            batch_loss = 0.0
            for idx in batch:
                sem_seq, syn_ids, out_ids = examples[idx]
                rng = drop_rng if cfg.resample_dropout else Rng(cfg.seed * 1_000_003 + idx)
                loss = model._loss(sem_seq, syn_ids, out_ids, rng, rate)
                value = loss.item()
                if not math.isfinite(value):
                    raise RuntimeError(
                        f"non-finite loss {value} at epoch {epoch} step {step} example {idx}")
                backward(loss * (1.0 / len(batch)))
                batch_loss += value / len(batch)
            adam_step(params, [p.grad for p in params], opt)
            step += 1
            epoch_total += batch_loss * len(batch)
            report.rows.append((epoch, step, batch_loss))
        report.epoch_means.append(epoch_total / len(order))
    return report


def train(model: SynPGModel, corpus, cfg: TrainingConfig) -> TrainReport:
    """Reconstruction-train a paraphraser on (sentence, own parse) pairs.

    The corpus is parsed text only: each example's parse is its own, and no
    paraphrase pairs are consumed anywhere.
    """
    stats = {}
    examples = []
    for words, tree in _normalize_corpus(corpus):
        sent = encode(words, model.vocab, WORD, stats=stats)
        parse_ids = encode(list(linearize(tree)), model.vocab, PARSE, stats=stats).ids
        examples.append((sent, parse_ids, list(sent.ids)))
    report = _run_training(model, examples, cfg, dropout_on_sem=True)
    report.truncations = stats
    return report


def train_parse_generator(model: ParseGeneratorModel, corpus, cfg: TrainingConfig) -> TrainReport:
    """Train (tag bag, template) -> full parse on trees alone.

    Tags carry no dropout: they are few and all informative, and dropout
    exists to diversify word choice, which has no parse-side analogue.
    """
    from .parsekit import extract_template, tag_sequence

    stats = {}
    examples = []
    for _, tree in _normalize_corpus(corpus):
        tags = encode(tag_sequence(tree), model.vocab, TAG, stats=stats)
        template_ids = encode(list(linearize(extract_template(tree))), model.vocab, PARSE,
                              stats=stats).ids
        target_ids = list(encode(list(linearize(tree)), model.vocab, PARSE, stats=stats).ids)
        examples.append((tags, template_ids, target_ids))
    report = _run_training(model, examples, cfg, dropout_on_sem=False)
    report.truncations = stats
    return report
