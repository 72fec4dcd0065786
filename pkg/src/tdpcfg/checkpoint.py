"""Checkpoint container: a zip archive holding a text manifest plus named
flat arrays as raw little-endian IEEE-754 bytes.

Layout:
    manifest.txt   key/value lines, then one "array <name> <dtype> <shape>"
                   line per stored array (shape as comma-joined extents)
    arrays/<name>.bin   raw little-endian array bytes, C order
    vocab.txt      optional; "word<TAB>id<TAB>count" per line

Grammar snapshots use the fixed array names U, V, W, Q, r.  Model
checkpoints store every parameter array plus the vocabulary so a
checkpoint is self-contained for parsing.
"""

from __future__ import annotations

import zipfile

import numpy as np

from .errors import ShapeError
from .grammar import TdPcfg
from .parameterizer import ModelConfig, NeuralParams
from .symbols import Vocabulary

SCHEMA_VERSION = "1"
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def _manifest_text(meta: dict[str, str], arrays: dict[str, np.ndarray]) -> str:
    lines = [f"format tdpcfg-checkpoint", f"schema_version {SCHEMA_VERSION}"]
    for key in sorted(meta):
        lines.append(f"{key} {meta[key]}")
    for name in sorted(arrays):
        arr = arrays[name]
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ShapeError(f"array {name} has unsupported dtype {dtype}")
        shape = ",".join(str(s) for s in arr.shape)
        lines.append(f"array {name} {dtype} {shape}")
    return "\n".join(lines) + "\n"


def _write(path, meta: dict[str, str], arrays: dict[str, np.ndarray],
           vocab: Vocabulary | None = None) -> None:
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.txt", _manifest_text(meta, arrays))
        for name in sorted(arrays):
            arr = arrays[name]
            raw = np.ascontiguousarray(arr).astype(_DTYPES[str(arr.dtype)]).tobytes()
            zf.writestr(f"arrays/{name}.bin", raw)
        if vocab is not None:
            lines = [
                f"{word}\t{idx}\t{count}"
                for idx, (word, count) in enumerate(zip(vocab.words, vocab.counts))
            ]
            zf.writestr("vocab.txt", "\n".join(lines) + "\n")


def _read(path) -> tuple[dict[str, str], dict[str, np.ndarray], Vocabulary | None]:
    meta: dict[str, str] = {}
    specs: list[tuple[str, str, tuple[int, ...]]] = []
    with zipfile.ZipFile(path) as zf:
        for line in zf.read("manifest.txt").decode("utf-8").splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition(" ")
            if key == "array":
                name, dtype, shape = value.split(" ")
                extents = tuple(int(s) for s in shape.split(",")) if shape else ()
                specs.append((name, dtype, extents))
            else:
                meta[key] = value
        if meta.get("format") != "tdpcfg-checkpoint":
            raise ShapeError(f"{path}: not a checkpoint container")
        arrays = {}
        for name, dtype, extents in specs:
            raw = zf.read(f"arrays/{name}.bin")
            arr = np.frombuffer(raw, dtype=_DTYPES[dtype]).astype(dtype).reshape(extents)
            arrays[name] = arr
        vocab = None
        if "vocab.txt" in zf.namelist():
            words, counts = [], []
            for line in zf.read("vocab.txt").decode("utf-8").splitlines():
                word, _, count = line.split("\t")
                words.append(word)
                counts.append(int(count))
            unk = words.index("<unk>") if "<unk>" in words else len(words) - 1
            vocab = Vocabulary(words=tuple(words), counts=tuple(counts), unk_id=unk)
    return meta, arrays, vocab


def save_grammar(path, g: TdPcfg, extra_meta: dict[str, str] | None = None) -> None:
    meta = {
        "kind": "grammar",
        "n": str(g.n), "p": str(g.p), "q": str(g.q), "d": str(g.d),
        "k": "0", "dtype": "float64",
    }
    meta.update(extra_meta or {})
    _write(path, meta, {"U": g.U, "V": g.V, "W": g.W, "Q": g.Q, "r": g.r})


def load_grammar(path) -> tuple[TdPcfg, dict[str, str]]:
    meta, arrays, _ = _read(path)
    if meta.get("kind") != "grammar":
        raise ShapeError(f"{path}: not a grammar snapshot")
    g = TdPcfg(U=arrays["U"], V=arrays["V"], W=arrays["W"],
               Q=arrays["Q"], r=arrays["r"])
    return g, meta


def save_model(path, params: NeuralParams, vocab: Vocabulary | None = None,
               extra_meta: dict[str, str] | None = None) -> None:
    cfg = params.cfg
    meta = {
        "kind": "model",
        "n": str(cfg.n), "p": str(cfg.p), "q": str(cfg.q),
        "d": str(cfg.d), "k": str(cfg.k), "dtype": cfg.dtype,
        "seed": str(cfg.seed),
    }
    meta.update(extra_meta or {})
    _write(path, meta, dict(params.state_dict()), vocab=vocab)


def load_model(path) -> tuple[NeuralParams, Vocabulary | None, dict[str, str]]:
    meta, arrays, vocab = _read(path)
    if meta.get("kind") != "model":
        raise ShapeError(f"{path}: not a model checkpoint")
    cfg = ModelConfig(
        n=int(meta["n"]), p=int(meta["p"]), q=int(meta["q"]),
        d=int(meta["d"]), k=int(meta["k"]), dtype=meta["dtype"],
        seed=int(meta.get("seed", "0")),
    )
    params = NeuralParams(cfg)
    params.load_state(arrays)
    return params, vocab, meta
