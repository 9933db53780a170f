"""Model assembly tests: dropout, losses, training mechanics, memorization."""

import math

import numpy as np
import pytest

from synpg.model import (
    GenerationError,
    ParseGeneratorModel,
    SynPGModel,
    TrainingConfig,
    reconstruction_loss,
    train,
    train_parse_generator,
    word_dropout,
)
from synpg.numerics import Rng, cross_entropy
from synpg.parsekit import StructureError, extract_template, linearize, parse_ptb_line, tag_sequence
from synpg.tokenizer import BOS, EOS, PAD, WORD, BagOfTokens, build_vocab, encode, to_bag
from synpg.transformer import decoder_forward

TINY = dict(d_model=16, n_heads=2, n_layers_enc_sem=1, n_layers_enc_syn=1,
            n_layers_dec=1, d_ffn=24)

TREES = [
    "(S (NP (NNP rex)) (VP (VBZ runs)) (. .))",
    "(S (NP (NNP milo)) (VP (VBT chases) (NPO (NNS balls))) (. .))",
    "(S (ADVP (RB quickly)) (NP (NNP nina)) (VP (VBZ sleeps)) (. .))",
]


@pytest.fixture(scope="module")
def tiny_setup():
    trees = [parse_ptb_line(t) for t in TREES]
    vocab = build_vocab(TREES)
    return trees, vocab


def test_word_dropout_rate_zero_and_one():
    bag = BagOfTokens((4, 5, 6, 7), WORD)
    assert word_dropout(bag, 0.0, Rng(1)) == bag
    assert word_dropout(bag, 1.0, Rng(1)).ids == ()


def test_word_dropout_keeps_binomial_fraction():
    rng = Rng(42)
    bag = BagOfTokens(tuple(range(4, 24)), WORD)
    total = 0
    kept = 0
    for _ in range(10000):
        total += len(bag)
        kept += len(word_dropout(bag, 0.4, rng))
    p = 0.6
    sigma = math.sqrt(total * p * (1 - p))
    assert abs(kept - total * p) <= 3 * sigma


def test_word_dropout_bad_rate():
    with pytest.raises(ValueError):
        word_dropout(BagOfTokens((4,), WORD), 1.5, Rng(1))


def test_initial_loss_near_log_vocab(tiny_setup):
    trees, vocab = tiny_setup
    model = SynPGModel.build(vocab, seed=3, **TINY)
    cfg = TrainingConfig(word_dropout=0.0)
    sent = encode(trees[1].words(), vocab, WORD)
    loss = reconstruction_loss(model, sent, linearize(trees[1]), None, cfg).item()
    assert abs(loss - math.log(vocab.size(WORD))) / math.log(vocab.size(WORD)) < 0.20


def test_rigged_certain_model_gives_zero_loss(tiny_setup):
    trees, vocab = tiny_setup
    # d_model <= word vocab so an identity output head exposes the full state
    model = SynPGModel.build(vocab, seed=5, d_model=8, n_heads=2, n_layers_enc_sem=1,
                             n_layers_enc_syn=1, n_layers_dec=1, d_ffn=16)
    cfg = TrainingConfig(word_dropout=0.0)
    sent = encode(trees[0].words(), vocab, WORD)
    parse_ids = encode(list(linearize(trees[0])), vocab, "parse").ids
    d = model.config.d_model
    v = vocab.size(WORD)
    assert v >= d

    # identity head exposes the decoder state, then solve for a head that
    # pins probability 1 on every target
    model.params["out.w"].data = np.eye(d, v)
    model.params["out.b"].data = np.zeros(v)
    mem_sem = model.encode_semantic(list(to_bag(sent).ids), ordered=False)
    mem_syn = model.encode_syntactic(list(parse_ids) + [EOS])
    logits = decoder_forward([BOS, *sent.ids], mem_sem, mem_syn, model.params, model.config)
    h = logits.data[:, :d]
    targets = [*sent.ids, EOS]
    wanted = np.full((len(targets), v), -1e4)
    for i, t in enumerate(targets):
        wanted[i, t] = 1e4
    model.params["out.w"].data = np.linalg.pinv(h) @ wanted
    loss = reconstruction_loss(model, sent, linearize(trees[0]), None, cfg)
    assert loss.item() == pytest.approx(0.0, abs=1e-9)


def test_reconstruction_loss_matches_recomposition(tiny_setup):
    trees, vocab = tiny_setup
    model = SynPGModel.build(vocab, seed=7, **TINY)
    cfg = TrainingConfig(word_dropout=0.0)
    sent = encode(trees[2].words(), vocab, WORD)
    parse_ids = encode(list(linearize(trees[2])), vocab, "parse").ids

    direct = reconstruction_loss(model, sent, linearize(trees[2]), None, cfg).item()
    mem_sem = model.encode_semantic(list(to_bag(sent).ids), ordered=False)
    mem_syn = model.encode_syntactic(list(parse_ids) + [EOS])
    logits = decoder_forward([BOS, *sent.ids], mem_sem, mem_syn, model.params, model.config)
    manual = cross_entropy(logits, [*sent.ids, EOS], ignore_index=PAD).item()
    assert abs(direct - manual) <= 1e-12


def test_reconstruction_loss_rejects_empty(tiny_setup):
    _, vocab = tiny_setup
    model = SynPGModel.build(vocab, seed=1, **TINY)
    with pytest.raises(ValueError):
        reconstruction_loss(model, encode([], vocab, WORD), ["(S", ")"], None, TrainingConfig())


def test_ablation_semantic_memory_is_order_sensitive(tiny_setup):
    trees, vocab = tiny_setup
    model = SynPGModel.build(vocab, seed=9, disentangled=False, **TINY)
    words = trees[1].words()
    ids = list(encode(words, vocab, WORD).ids)
    swapped = [ids[1], ids[0], *ids[2:]]
    # ablation path: ordered input with positions; swapping leaves a trace
    # even after undoing the row permutation
    m1 = model.encode_semantic(ids, ordered=True).matrix.data
    m2 = model.encode_semantic(swapped, ordered=True).matrix.data
    undone = np.vstack([m2[1], m2[0], m2[2:]])
    assert np.max(np.abs(undone - m1)) > 1e-6
    # disentangled path: the canonical bag makes both orders identical
    bag_model = SynPGModel.build(vocab, seed=9, **TINY)
    b1 = bag_model.encode_semantic(sorted(ids), ordered=False).matrix.data
    b2 = bag_model.encode_semantic(sorted(swapped), ordered=False).matrix.data
    assert np.array_equal(b1, b2)


def test_loss_decreases_on_repeated_example(tiny_setup):
    trees, vocab = tiny_setup
    model = SynPGModel.build(vocab, seed=11, **TINY)
    cfg = TrainingConfig(word_dropout=0.0, epochs=1, learning_rate=1e-3, seed=0)
    report = train(model, [trees[0]] * 10, cfg)
    losses = [v for _, _, v in report.rows]
    assert len(losses) == 10
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_training_is_deterministic(tiny_setup):
    trees, vocab = tiny_setup
    cfg = TrainingConfig(epochs=2, learning_rate=1e-3, seed=123)
    r1 = train(SynPGModel.build(vocab, seed=2, **TINY), trees, cfg)
    r2 = train(SynPGModel.build(vocab, seed=2, **TINY), trees, cfg)
    assert r1.rows == r2.rows


def test_frozen_dropout_masks_escape_hatch(tiny_setup):
    # resample_dropout=False fixes one mask per example across epochs; the
    # run stays deterministic but follows a different curve than resampling
    trees, vocab = tiny_setup
    frozen_cfg = TrainingConfig(epochs=2, word_dropout=0.5, seed=7, resample_dropout=False)
    f1 = train(SynPGModel.build(vocab, seed=2, **TINY), trees, frozen_cfg)
    f2 = train(SynPGModel.build(vocab, seed=2, **TINY), trees, frozen_cfg)
    assert f1.rows == f2.rows
    resampled = train(SynPGModel.build(vocab, seed=2, **TINY), trees,
                      TrainingConfig(epochs=2, word_dropout=0.5, seed=7))
    assert resampled.rows != f1.rows


def test_memorization_and_paraphrase_roundtrip(tiny_setup):
    trees, vocab = tiny_setup
    model = SynPGModel.build(vocab, seed=13, **TINY)
    cfg = TrainingConfig(word_dropout=0.1, epochs=250, learning_rate=2e-3, seed=5)
    train(model, trees, cfg)
    for tree in trees:
        out = model.paraphrase(tree.words(), linearize(tree))
        assert out == tree.words()


def test_paraphrase_invariant_to_input_order(tiny_setup):
    trees, vocab = tiny_setup
    model = SynPGModel.build(vocab, seed=17, **TINY)
    words = trees[1].words()
    lin = linearize(trees[1])
    base = model.paraphrase(words, lin)
    rng = Rng(3)
    for _ in range(5):
        perm = list(words)
        rng.shuffle(perm)
        assert model.paraphrase(perm, lin) == base


def test_paraphrase_rejects_malformed_parse(tiny_setup):
    trees, vocab = tiny_setup
    model = SynPGModel.build(vocab, seed=19, **TINY)
    with pytest.raises(StructureError):
        model.paraphrase(trees[0].words(), ["(S", "(NP"])


def test_mode_mismatch_needs_explicit_flag(tiny_setup):
    trees, vocab = tiny_setup
    ablation = SynPGModel.build(vocab, seed=23, disentangled=False, **TINY)
    words = trees[0].words()
    lin = linearize(trees[0])
    ablation.paraphrase(words, lin)  # native mode is fine
    with pytest.raises(ValueError):
        ablation.paraphrase(words, lin, disentangled=True)
    out = ablation.paraphrase(words, lin, disentangled=True, allow_mode_mismatch=True)
    assert isinstance(out, list)


def test_parse_generator_memorizes_single_tree(tiny_setup):
    trees, vocab = tiny_setup
    model = ParseGeneratorModel.build(vocab, seed=29, **TINY)
    tree = trees[1]
    cfg = TrainingConfig(epochs=300, learning_rate=2e-3, seed=7)
    report = train_parse_generator(model, [tree], cfg)
    assert report.rows[-1][2] < 0.05
    out = model.generate_full_parse(tag_sequence(tree), extract_template(tree))
    assert out == linearize(tree)


def test_parse_generator_same_seed_determinism(tiny_setup):
    trees, vocab = tiny_setup
    cfg = TrainingConfig(epochs=2, seed=31)
    r1 = train_parse_generator(ParseGeneratorModel.build(vocab, seed=3, **TINY), trees, cfg)
    r2 = train_parse_generator(ParseGeneratorModel.build(vocab, seed=3, **TINY), trees, cfg)
    assert r1.rows == r2.rows


def test_untrained_parse_generator_rejects_unbalanced(tiny_setup):
    trees, vocab = tiny_setup
    model = ParseGeneratorModel.build(vocab, seed=37, **TINY)
    # an untrained model usually emits junk; either outcome must be clean
    try:
        out = model.generate_full_parse(tag_sequence(trees[0]), extract_template(trees[0]))
    except GenerationError:
        return
    assert len(list(out)) >= 2


def test_train_report_csv(tiny_setup):
    trees, vocab = tiny_setup
    cfg = TrainingConfig(epochs=1, seed=1)
    report = train(SynPGModel.build(vocab, seed=41, **TINY), trees, cfg)
    text = report.to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "epoch,step,loss"
    assert len(lines) == 1 + len(report.rows)
    assert report.truncations == {}


def test_non_finite_loss_aborts_with_diagnostics(tiny_setup):
    trees, vocab = tiny_setup
    model = SynPGModel.build(vocab, seed=43, **TINY)
    # poison the "." embedding row: the embedding scale overflows to inf and
    # layer norm turns that into NaN on the first example
    model.params["emb.word"].data[4, :] = 1e308
    with pytest.raises(RuntimeError, match="non-finite loss"):
        train(model, trees, TrainingConfig(epochs=1, seed=0))
