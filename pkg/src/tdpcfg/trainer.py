"""Maximum-likelihood training of the neural parameterization.

The loss is the summed (not averaged) negative log-likelihood of the
batch; the optimizer is Adam with bias correction.  Early stopping keeps
the parameters from the epoch with the best per-token development
perplexity.  Everything is deterministic given the seed: batching uses a
seeded generator and reductions run in a fixed order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .errors import ShapeError, ZeroProbabilityError
from .inside import Sentence, as_sentence, batch_log_likelihood, inside_log_prob_tape
from .parameterizer import ModelConfig, NeuralParams, emit_grammar


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.75
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 4
    max_epochs: int = 10
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    bucket_width: int = 4
    precision: str = "float32"
    grad_clip: float | None = None  # off by default

    def __post_init__(self):
        if not 0.0 <= self.learning_rate < 1.0:
            raise ShapeError(f"learning_rate must lie in [0, 1), got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ShapeError(f"{name} must lie in (0, 1), got {v}")
        if self.batch_size < 1:
            raise ShapeError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ShapeError("max_epochs must be >= 0")
        if self.precision not in ("float32", "float64"):
            raise ShapeError(f"unsupported precision {self.precision!r}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: NeuralParams) -> "AdamState":
        return cls(
            m={name: np.zeros_like(a.data) for name, a in params.leaves()},
            v={name: np.zeros_like(a.data) for name, a in params.leaves()},
        )


def adam_step(params: NeuralParams, state: AdamState, config: TrainConfig) -> None:
    """One bias-corrected Adam update from the accumulated .grad buffers."""
    state.step += 1
    t = state.step
    b1, b2, eps, lr = config.beta1, config.beta2, config.epsilon, config.learning_rate
    for name, leaf in params.leaves():
        g = leaf.grad
        if g is None:
            continue
        if config.grad_clip is not None:
            norm = float(np.linalg.norm(g))
            if norm > config.grad_clip:
                g = g * (config.grad_clip / norm)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        leaf.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(leaf.dtype, copy=False)


def nll_batch(params: NeuralParams, batch: list) -> float:
    """Summed negative log-likelihood of the batch, with gradients.

    The grammar is re-emitted inside the tape, so gradients reach every
    network leaf.  Gradients accumulate into the existing .grad buffers;
    zero them at step start.  A zero-probability sentence is a pipeline
    bug (softmax grammars have full support) and raises, naming the
    sentence.
    """
    sents = [as_sentence(s) for s in batch]
    if not sents:
        raise ShapeError("empty batch")
    with ad.Tape() as tape:
        arrs = params.emit_arrays()
        total = None
        for pos, sent in enumerate(sents):
            try:
                lp = inside_log_prob_tape(arrs, sent.ids).log_prob
            except ZeroProbabilityError as exc:
                raise ZeroProbabilityError(
                    f"batch sentence {pos} (ids {list(sent.ids)}) has zero probability"
                ) from exc
            total = lp if total is None else ad.add(total, lp)
        loss = ad.scale(total, -1.0)
    ad.backward(tape, loss)
    return float(loss.data)


def perplexity(grammar_or_params, corpus: list, backend: str | None = None) -> float:
    """Per-token perplexity exp(-sum log p / sum length)."""
    if isinstance(grammar_or_params, NeuralParams):
        g = emit_grammar(grammar_or_params)
    else:
        g = grammar_or_params
    sents = [as_sentence(s) for s in corpus]
    if not sents:
        raise ShapeError("empty corpus")
    if any(len(s) < 2 for s in sents):
        raise ShapeError("perplexity corpus must contain only sentences of >= 2 tokens")
    lps = batch_log_likelihood(g, sents, backend=backend)
    tokens = sum(len(s) for s in sents)
    if not np.isfinite(lps).all():
        return float("inf")
    return math.exp(-float(lps.sum()) / tokens)


@dataclass
class EpochRecord:
    seed: int
    epoch: int                 # 0 = initialization (no training step yet)
    train_nll: float           # nan for epoch 0
    dev_perplexity: float
    wall_seconds: float


@dataclass
class SeedResult:
    seed: int
    best_epoch: int
    best_perplexity: float
    state: dict[str, np.ndarray]
    history: list[EpochRecord] = field(default_factory=list)


@dataclass
class TrainResult:
    model_config: ModelConfig
    train_config: TrainConfig
    per_seed: list[SeedResult] = field(default_factory=list)

    def history_rows(self) -> list[EpochRecord]:
        return [rec for res in self.per_seed for rec in res.history]


def _batches(corpus: list[Sentence], config: TrainConfig, seed: int, epoch: int):
    """Length-bucketed batches in a deterministic shuffled order."""
    rng = np.random.default_rng((seed, epoch, 0xB0C))
    buckets: dict[int, list[int]] = {}
    for idx, sent in enumerate(corpus):
        buckets.setdefault(len(sent) // max(1, config.bucket_width), []).append(idx)
    batches = []
    for key in sorted(buckets):
        members = np.array(buckets[key])
        rng.shuffle(members)
        for off in range(0, members.size, config.batch_size):
            batches.append(members[off:off + config.batch_size])
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def train_one_seed(train_config: TrainConfig, model_config: ModelConfig,
                   train_corpus: list, dev_corpus: list, seed: int) -> SeedResult:
    corpus = [as_sentence(s) for s in train_corpus]
    dev = [as_sentence(s) for s in dev_corpus]
    if not corpus:
        raise ShapeError("empty training corpus")
    if not dev:
        raise ShapeError("empty development corpus")
    if any(len(s) < 2 for s in corpus + dev):
        raise ShapeError("corpora must be filtered to sentences of >= 2 tokens")

    params = NeuralParams(model_config.with_seed(seed))
    state = AdamState.for_params(params)
    t0 = time.perf_counter()
    result = SeedResult(seed=seed, best_epoch=0, best_perplexity=math.inf, state={})
    init_ppl = perplexity(params, dev)
    result.history.append(EpochRecord(seed, 0, math.nan, init_ppl, time.perf_counter() - t0))
    result.best_perplexity = init_ppl
    result.state = params.state_dict()

    for epoch in range(1, train_config.max_epochs + 1):
        total_nll = 0.0
        for batch_idx in _batches(corpus, train_config, seed, epoch):
            params.zero_grads()
            total_nll += nll_batch(params, [corpus[i] for i in batch_idx])
            adam_step(params, state, train_config)
        ppl = perplexity(params, dev)
        result.history.append(
            EpochRecord(seed, epoch, total_nll, ppl, time.perf_counter() - t0)
        )
        if ppl < result.best_perplexity:
            result.best_perplexity = ppl
            result.best_epoch = epoch
            result.state = params.state_dict()
    return result


def train(train_config: TrainConfig, model_config: ModelConfig,
          train_corpus: list, dev_corpus: list) -> TrainResult:
    """Run every configured seed; each keeps its best-perplexity epoch.

    The training precision overrides the model dtype so the two cannot
    disagree.
    """
    model_config = replace(model_config, dtype=train_config.precision)
    out = TrainResult(model_config=model_config, train_config=train_config)
    for seed in train_config.seeds:
        out.per_seed.append(
            train_one_seed(train_config, model_config, train_corpus, dev_corpus, seed)
        )
    return out


def params_from_result(result: TrainResult, seed_result: SeedResult) -> NeuralParams:
    """Rebuild a parameter store from a stored per-seed state."""
    params = NeuralParams(result.model_config.with_seed(seed_result.seed))
    params.load_state(seed_result.state)
    return params
