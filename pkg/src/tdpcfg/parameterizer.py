"""Neural generation of the factored grammar parameters.

All five parameter groups {U, V, W, Q, r} come out of softmax layers, so
every forward pass yields a valid factored grammar by construction; no
renormalization happens anywhere downstream.

The three factor heads share one symbol embedding table and nothing
else.  The preterminal-emission and start-rule scorers use their own
embeddings (separate from the shared table) with a residual two-layer
ReLU encoder followed by a bilinear softmax over output embeddings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .grammar import TdPcfg
from .inside import GrammarArrays


@dataclass(frozen=True)
class ModelConfig:
    """Model sizes.  Unset n and d are derived: n = p // 2 and d = p when
    p > 200 else 200 (the regime the defaults were tuned for)."""

    p: int = 500
    q: int = 10000
    n: int | None = None
    d: int | None = None
    k: int = 256
    dtype: str = "float32"
    seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if self.n is None:
            object.__setattr__(self, "n", max(1, self.p // 2))
        if self.d is None:
            object.__setattr__(self, "d", self.p if self.p > 200 else 200)
        if min(self.n, self.p, self.q, self.d, self.k) < 1:
            raise ShapeError("all model sizes must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ShapeError(f"unsupported dtype {self.dtype!r}")
        if self.activation != "relu":
            # Alternatives (tanh, sigmoid) degrade induction badly; refuse
            # rather than silently train a known-bad model.
            raise ShapeError(
                f"activation {self.activation!r} is not supported: only ReLU "
                "is known to work for this parameterization"
            )

    @property
    def m(self) -> int:
        return self.n + self.p

    def with_seed(self, seed: int) -> "ModelConfig":
        return replace(self, seed=seed)


def parameter_count(cfg: ModelConfig) -> int:
    """Exact number of trainable scalars as a function of the sizes."""
    n, p, q, d, k = cfg.n, cfg.p, cfg.q, cfg.d, cfg.k
    m = n + p
    shared = m * k
    head = k * k + k + k * d + d          # two affine layers
    mlp = 2 * (k * k + k)                 # residual k -> k -> k encoder
    emission = p * k + q * k + mlp
    start = k + n * k + mlp
    return shared + 3 * head + emission + start


class NeuralParams:
    """Trainable parameter store; leaves are autodiff Arrays."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        n, p, q, d, k = cfg.n, cfg.p, cfg.q, cfg.d, cfg.k
        m = n + p
        rng = np.random.default_rng(cfg.seed)
        dt = np.dtype(cfg.dtype)

        def emb(*shape):
            return ad.parameter(rng.standard_normal(shape), dtype=dt)

        def lin(rows, cols):
            # fan-in scaled so pre-softmax logits start O(1)
            return ad.parameter(
                rng.standard_normal((rows, cols)) / math.sqrt(rows), dtype=dt
            )

        def bias(size):
            return ad.parameter(np.zeros(size), dtype=dt)

        self._leaves: dict[str, ad.Array] = {}
        add = self._leaves.__setitem__
        add("sym_emb", emb(m, k))
        for name in ("parent", "left", "right"):
            add(f"{name}_w1", lin(k, k))
            add(f"{name}_b1", bias(k))
            add(f"{name}_w2", lin(k, d))
            add(f"{name}_b2", bias(d))
        add("pre_emb", emb(p, k))
        add("word_out", emb(q, k))
        add("pre_mlp_w1", lin(k, k))
        add("pre_mlp_b1", bias(k))
        add("pre_mlp_w2", lin(k, k))
        add("pre_mlp_b2", bias(k))
        add("start_emb", emb(k))
        add("nt_out", emb(n, k))
        add("start_mlp_w1", lin(k, k))
        add("start_mlp_b1", bias(k))
        add("start_mlp_w2", lin(k, k))
        add("start_mlp_b2", bias(k))

    def __getattr__(self, name: str) -> ad.Array:
        try:
            return self.__dict__["_leaves"][name]
        except KeyError:
            raise AttributeError(name) from None

    def leaves(self) -> list[tuple[str, ad.Array]]:
        return list(self._leaves.items())

    def count(self) -> int:
        return sum(a.data.size for _, a in self.leaves())

    def zero_grads(self) -> None:
        for _, a in self.leaves():
            a.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: a.data.copy() for name, a in self.leaves()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, a in self.leaves():
            src = np.asarray(state[name], dtype=a.dtype)
            if src.shape != a.shape:
                raise ShapeError(f"{name}: checkpoint shape {src.shape} != {a.shape}")
            a.data[...] = src

    # -- forward ----------------------------------------------------------

    def _head(self, rows: ad.Array, which: str) -> ad.Array:
        h = ad.relu(ad.add(ad.matmul(rows, self._leaves[f"{which}_w1"]),
                           self._leaves[f"{which}_b1"]))
        return ad.add(ad.matmul(h, self._leaves[f"{which}_w2"]),
                      self._leaves[f"{which}_b2"])

    def _encoder(self, rows: ad.Array, which: str) -> ad.Array:
        h = ad.relu(ad.add(ad.matmul(rows, self._leaves[f"{which}_w1"]),
                           self._leaves[f"{which}_b1"]))
        h = ad.add(ad.matmul(h, self._leaves[f"{which}_w2"]),
                   self._leaves[f"{which}_b2"])
        return ad.add(rows, h)

    def emit_arrays(self) -> GrammarArrays:
        """Forward pass producing all grammar parameters as Arrays.

        Records on the active tape when one is open; eager otherwise.
        """
        cfg = self.cfg
        E = self.sym_emb
        E_top = ad.gather_rows(E, np.arange(cfg.n))
        U = ad.softmax_over_axis(self._head(E_top, "parent"), axis=1)
        V = ad.softmax_over_axis(self._head(E, "left"), axis=0)
        W = ad.softmax_over_axis(self._head(E, "right"), axis=0)

        H = self._encoder(self.pre_emb, "pre_mlp")                # (p, k)
        Q = ad.softmax_over_axis(ad.matmul(H, ad.transpose(self.word_out)), axis=1)

        hs = self._encoder(ad.reshape(self.start_emb, (1, cfg.k)), "start_mlp")
        r_logits = ad.reshape(ad.matmul(hs, ad.transpose(self.nt_out)), (cfg.n,))
        r = ad.softmax_over_axis(r_logits, axis=0)
        return GrammarArrays(U=U, V=V, W=W, Q=Q, r=r)


def emit_binary_factors(params: NeuralParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """U (n x d) row-stochastic, V and W (m x d) column-stochastic."""
    g = params.emit_arrays()
    return g.U.data.copy(), g.V.data.copy(), g.W.data.copy()


def emit_preterminal_matrix(params: NeuralParams) -> np.ndarray:
    """Emission matrix Q (p x q), rows normalized."""
    return params.emit_arrays().Q.data.copy()


def emit_start_vector(params: NeuralParams) -> np.ndarray:
    """Start probabilities r (n,), normalized."""
    return params.emit_arrays().r.data.copy()


def emit_grammar(params: NeuralParams) -> TdPcfg:
    """One forward pass packaged as a grammar (always valid by construction)."""
    g = params.emit_arrays()
    return TdPcfg(U=g.U.data, V=g.V.data, W=g.W.data, Q=g.Q.data, r=g.r.data)
