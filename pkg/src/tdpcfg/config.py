"""Run configuration (INI-style key/value file) and run manifests.

The config file mirrors the module configs: a [model] section for sizes,
[train] for optimization, [data] for corpus paths and preprocessing,
[run] for output location and threading.  Unknown sections or keys are
rejected by name so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import subprocess
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

from .corpus import DEFAULT_PUNCT_TAGS
from .errors import ShapeError
from .parameterizer import ModelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


_ALLOWED = {
    "model": {"n", "p", "q", "d", "k", "seed", "dtype", "activation"},
    "train": {"learning_rate", "beta1", "beta2", "batch_size", "max_epochs",
              "seeds", "bucket_width", "precision", "grad_clip"},
    "data": {"train", "dev", "test", "vocab_size", "punct_tags", "min_tokens",
             "max_tokens"},
    "run": {"out", "threads"},
}


@dataclass
class DataConfig:
    train: str = ""
    dev: str = ""
    test: str = ""
    vocab_size: int = 10000
    punct_tags: frozenset[str] = DEFAULT_PUNCT_TAGS
    min_tokens: int = 2
    max_tokens: int = 0  # 0 = no cap


@dataclass
class RunSettings:
    out: str = "runs"
    threads: int = 1


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    data: DataConfig
    run: RunSettings
    raw_text: str = ""


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    text = parser.get(section, key).strip()
    if text == "":
        return default
    try:
        return cast(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key [{section}] {key}: bad value {text!r}") from exc


def _seeds(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.replace(",", " ").split())


def load_config(path) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    for section in parser.sections():
        if section not in _ALLOWED:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in _ALLOWED[section]:
                raise ConfigError(f"unknown config key [{section}] {key}")

    try:
        model = ModelConfig(
            p=_get(parser, "model", "p", int, 500),
            q=_get(parser, "model", "q", int, 10000),
            n=_get(parser, "model", "n", int, None),
            d=_get(parser, "model", "d", int, None),
            k=_get(parser, "model", "k", int, 256),
            seed=_get(parser, "model", "seed", int, 0),
            dtype=_get(parser, "model", "dtype", str, "float32"),
            activation=_get(parser, "model", "activation", str, "relu"),
        )
        train = TrainConfig(
            learning_rate=_get(parser, "train", "learning_rate", float, 1e-3),
            beta1=_get(parser, "train", "beta1", float, 0.75),
            beta2=_get(parser, "train", "beta2", float, 0.999),
            batch_size=_get(parser, "train", "batch_size", int, 4),
            max_epochs=_get(parser, "train", "max_epochs", int, 10),
            seeds=_get(parser, "train", "seeds", _seeds, (0, 1, 2, 3)),
            bucket_width=_get(parser, "train", "bucket_width", int, 4),
            precision=_get(parser, "train", "precision", str, "float32"),
            grad_clip=_get(parser, "train", "grad_clip", float, None),
        )
    except ShapeError as exc:
        raise ConfigError(str(exc)) from exc
    data = DataConfig(
        train=_get(parser, "data", "train", str, ""),
        dev=_get(parser, "data", "dev", str, ""),
        test=_get(parser, "data", "test", str, ""),
        vocab_size=_get(parser, "data", "vocab_size", int, 10000),
        punct_tags=_get(parser, "data", "punct_tags",
                        lambda t: frozenset(t.split()), DEFAULT_PUNCT_TAGS),
        min_tokens=_get(parser, "data", "min_tokens", int, 2),
        max_tokens=_get(parser, "data", "max_tokens", int, 0),
    )
    run = RunSettings(
        out=_get(parser, "run", "out", str, "runs"),
        threads=_get(parser, "run", "threads", int, 1),
    )
    return RunConfig(model=model, train=train, data=data, run=run, raw_text=text)


# ---------------------------------------------------------------------------
# run manifests


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def code_version() -> str:
    try:
        version = metadata.version("tdpcfg")
    except metadata.PackageNotFoundError:
        version = "unknown"
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if described.returncode == 0:
            return f"{version}+g{described.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return version


@dataclass
class RunManifest:
    command: str
    config_snapshot: str
    seeds: list[int]
    version: str
    input_digests: dict[str, str]
    output_paths: list[str] = field(default_factory=list)

    def digest(self) -> str:
        payload = json.dumps(
            {
                "command": self.command,
                "config": self.config_snapshot,
                "seeds": self.seeds,
                "inputs": self.input_digests,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def write(self, path) -> None:
        body = {
            "command": self.command,
            "config_snapshot": self.config_snapshot,
            "seeds": self.seeds,
            "version": self.version,
            "input_digests": self.input_digests,
            "output_paths": sorted(self.output_paths),
            "digest": self.digest(),
        }
        Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def make_manifest(command: str, config_text: str, seeds, inputs: dict[str, str]) -> RunManifest:
    return RunManifest(
        command=command,
        config_snapshot=config_text,
        seeds=[int(s) for s in seeds],
        version=code_version(),
        input_digests={name: file_digest(p) for name, p in inputs.items()},
    )
