"""Checkpoint container tests: roundtrip fidelity and corruption handling."""

import numpy as np
import pytest

from synpg.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint
from synpg.model import ParseGeneratorModel, SynPGModel, TrainingConfig, train
from synpg.parsekit import linearize, parse_ptb_line
from synpg.tokenizer import build_vocab

TINY = dict(d_model=16, n_heads=2, n_layers_enc_sem=1, n_layers_enc_syn=1,
            n_layers_dec=1, d_ffn=24)

TREES = [
    "(S (NP (NNP rex)) (VP (VBZ runs)) (. .))",
    "(S (NP (NNP milo)) (VP (VBT chases) (NPO (NNS balls))) (. .))",
]


@pytest.fixture(scope="module")
def trained():
    trees = [parse_ptb_line(t) for t in TREES]
    vocab = build_vocab(TREES)
    model = SynPGModel.build(vocab, seed=1, **TINY)
    train(model, trees, TrainingConfig(epochs=40, learning_rate=2e-3, seed=4))
    return trees, model


def test_roundtrip_reproduces_parameters(trained, tmp_path):
    trees, model = trained
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert type(loaded) is SynPGModel
    assert loaded.disentangled == model.disentangled
    assert loaded.config == model.config
    assert loaded.vocab == model.vocab
    for name in model.parameter_names():
        expected = model.params[name].data.astype(np.float32).astype(np.float64)
        assert np.array_equal(loaded.params[name].data, expected), name


def test_roundtrip_is_generation_identical(trained, tmp_path):
    trees, model = trained
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    m1 = load_checkpoint(path)
    save_checkpoint(m1, tmp_path / "m2.ckpt")
    m2 = load_checkpoint(tmp_path / "m2.ckpt")
    for tree in trees:
        probe = (tree.words(), linearize(tree))
        out_orig = model.paraphrase(*probe)
        assert m1.paraphrase(*probe) == out_orig
        assert m2.paraphrase(*probe) == m1.paraphrase(*probe)


def test_truncated_file_fails_checksum(trained, tmp_path):
    _, model = trained
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    blob = path.read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(blob[:-10])
    with pytest.raises(CheckpointError) as exc:
        load_checkpoint(tmp_path / "cut.ckpt")
    assert exc.value.field == "checksum"


def test_bad_magic(trained, tmp_path):
    _, model = trained
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    blob = bytearray(path.read_bytes())
    blob[:6] = b"NOTCKP"
    (tmp_path / "bad.ckpt").write_bytes(bytes(blob))
    with pytest.raises(CheckpointError) as exc:
        load_checkpoint(tmp_path / "bad.ckpt")
    assert exc.value.field == "magic"


def test_flipped_payload_bit_fails_checksum(trained, tmp_path):
    _, model = trained
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    blob = bytearray(path.read_bytes())
    blob[-100] ^= 0x40
    (tmp_path / "flip.ckpt").write_bytes(bytes(blob))
    with pytest.raises(CheckpointError) as exc:
        load_checkpoint(tmp_path / "flip.ckpt")
    assert exc.value.field == "checksum"


def test_ablation_flag_survives_and_guards_inference(trained, tmp_path):
    trees, _ = trained
    vocab = build_vocab(TREES)
    ablation = SynPGModel.build(vocab, seed=9, disentangled=False, **TINY)
    path = tmp_path / "abl.ckpt"
    save_checkpoint(ablation, path)
    loaded = load_checkpoint(path)
    assert loaded.disentangled is False
    words, lin = trees[0].words(), linearize(trees[0])
    with pytest.raises(ValueError):
        loaded.paraphrase(words, lin, disentangled=True)
    loaded.paraphrase(words, lin, disentangled=True, allow_mode_mismatch=True)


def test_parse_generator_kind_roundtrip(tmp_path):
    vocab = build_vocab(TREES)
    model = ParseGeneratorModel.build(vocab, seed=2, **TINY)
    path = tmp_path / "pg.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert type(loaded) is ParseGeneratorModel
    assert loaded.kind == "PARSEGEN"


def test_magic_constant():
    assert MAGIC == b"SYNPG1"
