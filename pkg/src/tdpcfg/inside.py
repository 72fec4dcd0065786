"""Inside algorithm: dense reference recursion and factored production path.

The dense path contracts the explicit rule tensor and is cubic in the
symbol number; the factored path works entirely through the factor
matrices, caching per-span projections so each split costs O(d) after
an O(md) projection per span.

Numerical stability uses linear-space vectors with per-span max
rescaling: every chart cell stores `scaled` with max entry 1 and an
additive log-space exponent.  Rescaling constants are data-dependent
but held constant on the autodiff tape; the taped value equals the true
log-likelihood as a function of the parameters, so gradients are exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels
from .errors import ShapeError, ZeroProbabilityError
from .grammar import DensePcfg, TdPcfg

NEG_INF = float("-inf")

LENGTH_ONE_NOTE = (
    "sentence shorter than 2 tokens: the start symbol only expands to "
    "binary-branching nonterminals, so its probability is zero"
)


@dataclass(frozen=True)
class Sentence:
    """A tokenized sentence as terminal ids."""

    ids: tuple[int, ...]

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        if len(ids) < 1:
            raise ShapeError("empty sentence")
        if min(ids) < 0:
            raise ShapeError("negative terminal id")
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.ids)


def as_sentence(s) -> Sentence:
    return s if isinstance(s, Sentence) else Sentence(tuple(s))


@dataclass
class Chart:
    """Scaled inside chart.

    true inside vector of span (i, j) = scaled[i, j] * exp(exponents[i, j]).
    Cells with alive=False have no derivation (all-zero scaled vector).
    left_proj/right_proj hold the cached factor projections of each span
    (factored path only), scaled with the same exponent as the span.
    """

    n: int
    scaled: np.ndarray          # (l, l, m)
    exponents: np.ndarray       # (l, l)
    alive: np.ndarray           # (l, l) bool
    left_proj: np.ndarray | None = None   # (l, l, d)
    right_proj: np.ndarray | None = None  # (l, l, d)
    note: str | None = None

    @property
    def length(self) -> int:
        return self.scaled.shape[0]

    def inside_vector(self, i: int, j: int) -> np.ndarray:
        return self.scaled[i, j] * math.exp(self.exponents[i, j])


def _check_ids(ids, q: int) -> np.ndarray:
    arr = np.asarray(ids, dtype=np.int64)
    if arr.size and arr.max() >= q:
        raise ShapeError(f"terminal id {int(arr.max())} outside vocabulary of {q}")
    return arr


def _root_log_prob(r: np.ndarray, chart: Chart) -> float:
    l = chart.length
    if l < 2 or not chart.alive[0, l - 1]:
        return NEG_INF
    dot = float(r @ chart.scaled[0, l - 1, : chart.n])
    if dot <= 0.0:
        return NEG_INF
    return float(chart.exponents[0, l - 1]) + math.log(dot)


def inside_dense(g: DensePcfg, sentence, backend: str | None = None) -> tuple[float, Chart]:
    """Reference inside pass over the explicit rule tensor."""
    sent = as_sentence(sentence)
    ids = _check_ids(sent.ids, g.q)
    kern = kernels.get_backend(backend)
    s, c, alive, _, _ = kern.inside_dense(g.T, g.Q, g.r, ids)
    chart = Chart(n=g.n, scaled=s, exponents=c, alive=alive)
    if len(sent) < 2:
        chart.note = LENGTH_ONE_NOTE
        return NEG_INF, chart
    return _root_log_prob(g.r, chart), chart


def inside_factored(g: TdPcfg, sentence, backend: str | None = None) -> tuple[float, Chart]:
    """Production inside pass over the factor matrices."""
    sent = as_sentence(sentence)
    ids = _check_ids(sent.ids, g.q)
    kern = kernels.get_backend(backend)
    s, c, alive, P, R = kern.inside_factored(g.U, g.V, g.W, g.Q, g.r, ids)
    chart = Chart(n=g.n, scaled=s, exponents=c, alive=alive, left_proj=P, right_proj=R)
    if len(sent) < 2:
        chart.note = LENGTH_ONE_NOTE
        return NEG_INF, chart
    return _root_log_prob(g.r, chart), chart


def batch_log_likelihood(g: TdPcfg, sentences, backend: str | None = None,
                         threads: int = 1) -> np.ndarray:
    """Factored log-likelihood per sentence, order preserved.

    Zero-probability sentences (including length < 2) yield -inf.
    """
    batch = [as_sentence(s) for s in sentences]
    if not batch:
        raise ShapeError("empty batch")

    def one(sent):
        return inside_factored(g, sent, backend=backend)[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(one, batch)))
    return np.array([one(s) for s in batch])


# ---------------------------------------------------------------------------
# differentiable path


@dataclass
class GrammarArrays:
    """Factored grammar as autodiff Arrays (leaves or taped outputs)."""

    U: ad.Array
    V: ad.Array
    W: ad.Array
    Q: ad.Array
    r: ad.Array

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    @property
    def m(self) -> int:
        return self.V.shape[0]

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    @property
    def q(self) -> int:
        return self.Q.shape[1]

    @classmethod
    def from_grammar(cls, g: TdPcfg, dtype=np.float64) -> "GrammarArrays":
        return cls(
            U=ad.constant(g.U, dtype=dtype),
            V=ad.constant(g.V, dtype=dtype),
            W=ad.constant(g.W, dtype=dtype),
            Q=ad.constant(g.Q, dtype=dtype),
            r=ad.constant(g.r, dtype=dtype),
        )


@dataclass
class TapedInside:
    """of inside_log_prob_tape: the scalar plus per-span bookkeeping."""

    log_prob: ad.Array
    exponents: dict[tuple[int, int], float] = field(default_factory=dict)


def inside_log_prob_tape(g: GrammarArrays, ids, gates=None) -> TapedInside:
    """Build the factored inside recursion on the active tape.

    Returns a scalar Array whose value is the true log-likelihood.
    `gates` optionally maps a span (i, j), j > i, to a gate Array
    (scalar or length-n vector, value 1) multiplied onto that span's
    completed inside vector; gradients w.r.t. the gates are the span /
    span-symbol posteriors.

    Raises ZeroProbabilityError when the sentence has probability zero.
    """
    ids = [int(t) for t in ids]
    l = len(ids)
    n, m, p = g.n, g.m, g.p
    if l < 2:
        raise ZeroProbabilityError(LENGTH_ONE_NOTE)
    if max(ids) >= g.q:
        raise ShapeError(f"terminal id {max(ids)} outside vocabulary of {g.q}")

    nt_rows = np.arange(n)
    pt_rows = np.arange(n, m)
    v_top_t = ad.transpose(ad.gather_rows(g.V, nt_rows))   # (d, n)
    w_top_t = ad.transpose(ad.gather_rows(g.W, nt_rows))
    v_bot_t = ad.transpose(ad.gather_rows(g.V, pt_rows))   # (d, p)
    w_bot_t = ad.transpose(ad.gather_rows(g.W, pt_rows))
    leaf_rows = ad.gather_rows(ad.transpose(g.Q), np.asarray(ids))  # (l, p)

    svec: dict[tuple[int, int], ad.Array | None] = {}
    cexp: dict[tuple[int, int], float] = {}
    lproj: dict[tuple[int, int], ad.Array] = {}
    rproj: dict[tuple[int, int], ad.Array] = {}

    for i in range(l):
        row = ad.reshape(ad.gather_rows(leaf_rows, [i]), (p,))
        mu = float(row.data.max())
        if mu <= 0.0:
            svec[(i, i)] = None
            continue
        sv = ad.scale(row, 1.0 / mu)
        svec[(i, i)] = sv
        cexp[(i, i)] = math.log(mu)
        lproj[(i, i)] = ad.matmul(v_bot_t, sv)
        rproj[(i, i)] = ad.matmul(w_bot_t, sv)

    for w in range(2, l + 1):
        for i in range(l - w + 1):
            j = i + w - 1
            exps = [
                cexp[(i, k)] + cexp[(k + 1, j)]
                for k in range(i, j)
                if svec[(i, k)] is not None and svec[(k + 1, j)] is not None
            ]
            if not exps:
                svec[(i, j)] = None
                continue
            e_star = max(exps)
            acc = None
            for k in range(i, j):
                if svec[(i, k)] is None or svec[(k + 1, j)] is None:
                    continue
                f = math.exp(cexp[(i, k)] + cexp[(k + 1, j)] - e_star)
                if f == 0.0:
                    continue
                h = ad.hadamard(lproj[(i, k)], rproj[(k + 1, j)])
                if f != 1.0:
                    h = ad.scale(h, f)
                acc = h if acc is None else ad.add(acc, h)
            raw = ad.matmul(g.U, acc)                        # (n,)
            mu = float(raw.data.max())
            if mu <= 0.0:
                svec[(i, j)] = None
                continue
            sv = ad.scale(raw, 1.0 / mu)
            if gates is not None and (i, j) in gates:
                gate = gates[(i, j)]
                sv = ad.hadamard(sv, gate) if gate.ndim == 1 else ad.scale(sv, gate)
            svec[(i, j)] = sv
            cexp[(i, j)] = e_star + math.log(mu)
            if w < l:
                lproj[(i, j)] = ad.matmul(v_top_t, sv)
                rproj[(i, j)] = ad.matmul(w_top_t, sv)

    root = svec[(0, l - 1)]
    if root is None:
        raise ZeroProbabilityError("sentence has probability zero under the grammar")
    dot = ad.matmul(g.r, root)
    if float(dot.data) <= 0.0:
        raise ZeroProbabilityError("sentence has probability zero under the grammar")
    log_prob = ad.add(
        ad.log(dot), ad.constant(np.asarray(cexp[(0, l - 1)], dtype=dot.dtype))
    )
    return TapedInside(log_prob=log_prob, exponents=cexp)
