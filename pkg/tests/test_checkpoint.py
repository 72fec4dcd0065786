import zipfile

import numpy as np
import pytest

from tdpcfg import ModelConfig, NeuralParams, random_td_pcfg
from tdpcfg.checkpoint import load_grammar, load_model, save_grammar, save_model
from tdpcfg.errors import ShapeError
from tdpcfg.symbols import Vocabulary


def test_grammar_round_trip_is_bit_exact(tmp_path):
    g = random_td_pcfg(n=3, p=4, q=6, d=5, seed=2)
    path = tmp_path / "g.ckpt"
    save_grammar(path, g)
    loaded, meta = load_grammar(path)
    for name in ("U", "V", "W", "Q", "r"):
        assert np.array_equal(getattr(loaded, name), getattr(g, name))
    assert meta["n"] == "3" and meta["p"] == "4" and meta["d"] == "5"


def test_grammar_container_layout(tmp_path):
    g = random_td_pcfg(n=2, p=2, q=3, d=2, seed=0)
    path = tmp_path / "g.ckpt"
    save_grammar(path, g)
    with zipfile.ZipFile(path) as zf:
        names = set(zf.namelist())
        manifest = zf.read("manifest.txt").decode()
    assert {"manifest.txt", "arrays/U.bin", "arrays/V.bin", "arrays/W.bin",
            "arrays/Q.bin", "arrays/r.bin"} <= names
    assert "format tdpcfg-checkpoint" in manifest
    assert "array U float64 2,2" in manifest
    # raw little-endian bytes with the declared shape
    with zipfile.ZipFile(path) as zf:
        raw = zf.read("arrays/U.bin")
    assert np.array_equal(np.frombuffer(raw, dtype="<f8").reshape(2, 2), g.U)


def test_model_round_trip_with_vocabulary(tmp_path):
    cfg = ModelConfig(n=2, p=3, q=4, d=5, k=6, dtype="float32", seed=7)
    params = NeuralParams(cfg)
    vocab = Vocabulary(words=("a", "b", "c", "<unk>"), counts=(3, 2, 1, 0), unk_id=3)
    path = tmp_path / "m.ckpt"
    save_model(path, params, vocab=vocab, extra_meta={"best_epoch": "4"})
    loaded, loaded_vocab, meta = load_model(path)
    assert meta["best_epoch"] == "4"
    assert loaded.cfg == cfg
    assert loaded_vocab.words == vocab.words
    assert loaded_vocab.unk_id == 3
    for (name_a, a), (name_b, b) in zip(params.leaves(), loaded.leaves()):
        assert name_a == name_b
        assert np.array_equal(a.data, b.data)


def test_wrong_kind_rejected(tmp_path):
    g = random_td_pcfg(n=1, p=1, q=2, d=1, seed=0)
    path = tmp_path / "g.ckpt"
    save_grammar(path, g)
    with pytest.raises(ShapeError):
        load_model(path)
