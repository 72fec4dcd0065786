"""Two-stage MBR decoding plus exact oracles for small grammars.

Stage one differentiates the inside log-likelihood with respect to
multiplicative gate variables (one per span, value 1) to obtain the
posterior probability of each span being a constituent.  Stage two runs
a cubic dynamic program choosing the binary tree with the highest total
posterior.  Exact Viterbi CYK and full tree enumeration operate on
dense grammars only and serve as test oracles; the factored form cannot
support an exact max because the projection step entangles the symbols.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .errors import ShapeError, ZeroProbabilityError
from .grammar import DensePcfg, TdPcfg
from .inside import GrammarArrays, Sentence, as_sentence, inside_log_prob_tape

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ParseTree:
    """A binary bracketing; spans are (i, j, label) with j inclusive.

    Internal nodes have j > i; single-word spans (leaf tags) may be
    present on fully labeled derivations and are ignored by bracket
    comparisons.  Labels are symbol ids, or None for unlabeled trees.
    """

    length: int
    spans: tuple[tuple[int, int, int | None], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "spans", tuple(sorted(self.spans, key=lambda s: (s[0], -s[1], s[2] or 0)))
        )

    @property
    def internal_spans(self) -> tuple[tuple[int, int, int | None], ...]:
        return tuple(s for s in self.spans if s[1] > s[0])

    def brackets(self) -> frozenset[tuple[int, int]]:
        return frozenset((i, j) for i, j, _ in self.spans if j > i)

    def validate(self) -> None:
        """Check the internal spans form a binary bracketing of length leaves."""
        l = self.length
        ints = [(i, j) for i, j, _ in self.internal_spans]
        if l == 1:
            if ints:
                raise ShapeError("single-word tree cannot have internal spans")
            return
        if len(set(ints)) != len(ints) or len(ints) != l - 1:
            raise ShapeError(f"need exactly {l - 1} distinct internal spans, got {len(ints)}")
        if (0, l - 1) not in ints:
            raise ShapeError("missing whole-sentence span")
        for a in ints:
            if not (0 <= a[0] <= a[1] < l):
                raise ShapeError(f"span {a} out of range")
            for b in ints:
                disjoint = a[1] < b[0] or b[1] < a[0]
                nested = (a[0] <= b[0] and b[1] <= a[1]) or (b[0] <= a[0] and a[1] <= b[1])
                if not (disjoint or nested):
                    raise ShapeError(f"crossing spans {a} and {b}")


@dataclass(frozen=True)
class SpanPosteriors:
    """Posterior p(span is a constituent | sentence) for every (i, j), j > i.

    symbol[i, j] additionally splits the posterior over the m grammar
    symbols (preterminal coordinates are structurally zero for spans of
    width >= 2).
    """

    length: int
    span: np.ndarray            # (l, l)
    symbol: np.ndarray          # (l, l, m)
    log_likelihood: float

    def total(self) -> float:
        """Sum of posteriors over spans of width >= 2 (= l - 1 exactly)."""
        iu = np.triu_indices(self.length, k=1)
        return float(self.span[iu].sum())


def span_posteriors(g: TdPcfg, sentence) -> SpanPosteriors:
    """Gate-gradient span posteriors through the factored inside pass."""
    sent = as_sentence(sentence)
    l = len(sent)
    if l < 2:
        raise ZeroProbabilityError("posteriors undefined: sentence shorter than 2 tokens")
    gates: dict[tuple[int, int], ad.Array] = {}
    for w in range(2, l + 1):
        for i in range(l - w + 1):
            gates[(i, i + w - 1)] = ad.parameter(np.ones(g.n))
    arrs = GrammarArrays.from_grammar(g)
    with ad.Tape() as tape:
        taped = inside_log_prob_tape(arrs, sent.ids, gates=gates)
    grads = ad.backward(tape, taped.log_prob)

    span = np.zeros((l, l))
    symbol = np.zeros((l, l, g.m))
    for (i, j), gate in gates.items():
        gg = grads.get(gate)
        if gg is None:
            continue
        symbol[i, j, : g.n] = gg
        span[i, j] = gg.sum()
    return SpanPosteriors(
        length=l, span=span, symbol=symbol, log_likelihood=float(taped.log_prob.data)
    )


def mbr_parse(post: SpanPosteriors) -> ParseTree:
    """Binary tree maximizing the expected number of constituents.

    best(i, j) = p(i, j) + max_k best(i, k) + best(k+1, j), ties broken
    toward the smallest split point.  The whole-sentence span is counted
    too; it appears in every tree so the argmax is unaffected.
    """
    l = post.length
    best = np.zeros((l, l))
    split = np.zeros((l, l), dtype=np.int64)
    for w in range(2, l + 1):
        for i in range(l - w + 1):
            j = i + w - 1
            top, arg = NEG_INF, i
            for k in range(i, j):
                v = best[i, k] + best[k + 1, j]
                if v > top:
                    top, arg = v, k
            best[i, j] = post.span[i, j] + top
            split[i, j] = arg

    spans: list[tuple[int, int, int | None]] = []

    def collect(i, j):
        if i == j:
            return
        spans.append((i, j, None))
        k = int(split[i, j])
        collect(i, k)
        collect(k + 1, j)

    collect(0, l - 1)
    return ParseTree(length=l, spans=tuple(spans))


def label_spans(g: TdPcfg, sentence, tree: ParseTree,
                post: SpanPosteriors | None = None) -> ParseTree:
    """Label each internal span with its argmax posterior symbol.

    Ties break toward the smallest symbol id.  Only nonterminals can
    carry mass on spans of width >= 2, so labels land in [0, n).
    """
    if post is None:
        post = span_posteriors(g, sentence)
    labeled = []
    for i, j, _ in tree.internal_spans:
        labeled.append((i, j, int(np.argmax(post.symbol[i, j]))))
    return ParseTree(length=tree.length, spans=tuple(labeled))


def parse_mbr(g: TdPcfg, sentence) -> tuple[ParseTree, float]:
    """Full decode: posteriors, MBR tree, labels.  Returns (tree, log p)."""
    post = span_posteriors(g, sentence)
    tree = mbr_parse(post)
    return label_spans(g, sentence, tree, post=post), post.log_likelihood


def cyk_viterbi_dense(g: DensePcfg, sentence) -> tuple[ParseTree | None, float]:
    """Exact most-probable labeled tree by max-product dynamic programming.

    Dense grammars only; intended for small oracles.  Ties break toward
    the smallest split, then lexicographically smallest (left, right)
    symbols, then the smallest root.  Returns (None, -inf) when the
    sentence has no parse.
    """
    sent = as_sentence(sentence)
    ids = list(sent.ids)
    l = len(ids)
    n, m = g.n, g.m
    if l < 1 or max(ids, default=0) >= g.q:
        raise ShapeError("bad sentence")
    with np.errstate(divide="ignore"):
        logT = np.log(g.T)
        logQ = np.log(g.Q)
        logr = np.log(g.r)
    if l < 2:
        return None, NEG_INF

    chart = np.full((l, l, m), NEG_INF)
    back: dict[tuple[int, int, int], tuple[int, int, int]] = {}
    for i, word in enumerate(ids):
        chart[i, i, n:] = logQ[:, word]
    for w in range(2, l + 1):
        for i in range(l - w + 1):
            j = i + w - 1
            for k in range(i, j):
                cand = logT + chart[i, k][None, :, None] + chart[k + 1, j][None, None, :]
                flat = cand.reshape(n, -1)
                arg = flat.argmax(axis=1)
                val = flat[np.arange(n), arg]
                improved = val > chart[i, j, :n]
                for a in np.nonzero(improved)[0]:
                    chart[i, j, a] = val[a]
                    back[(i, j, int(a))] = (k, int(arg[a]) // m, int(arg[a]) % m)

    root_scores = logr + chart[0, l - 1, :n]
    root = int(np.argmax(root_scores))
    score = float(root_scores[root])
    if score == NEG_INF:
        return None, NEG_INF

    spans: list[tuple[int, int, int | None]] = []

    def collect(i, j, sym):
        if i == j:
            spans.append((i, i, sym))
            return
        spans.append((i, j, sym))
        k, b, c = back[(i, j, sym)]
        collect(i, k, b)
        collect(k + 1, j, c)

    collect(0, l - 1, root)
    return ParseTree(length=l, spans=tuple(spans)), score


def enumerate_trees(g: DensePcfg, sentence) -> list[tuple[ParseTree, float]]:
    """All fully labeled binary parses with nonzero probability.

    Exact rule-product probabilities; their sum is the sentence
    probability.  Catalan growth: refuses sentences longer than 10.
    """
    sent = as_sentence(sentence)
    ids = list(sent.ids)
    l = len(ids)
    if l > 10:
        raise ShapeError("enumeration limited to sentences of <= 10 tokens")
    if max(ids, default=0) >= g.q:
        raise ShapeError("terminal id outside vocabulary")
    n, m = g.n, g.m

    @lru_cache(maxsize=None)
    def cell(i: int, j: int) -> tuple[tuple[int, tuple, float], ...]:
        """Derivations of span (i, j): (root symbol, spans, probability)."""
        if i == j:
            out = []
            for t in range(g.p):
                prob = float(g.Q[t, ids[i]])
                if prob > 0:
                    out.append((n + t, ((i, i, n + t),), prob))
            return tuple(out)
        out = []
        for k in range(i, j):
            for bsym, bspans, bprob in cell(i, k):
                for csym, cspans, cprob in cell(k + 1, j):
                    rules = g.T[:, bsym, csym]
                    for a in np.nonzero(rules > 0)[0]:
                        prob = float(rules[a]) * bprob * cprob
                        out.append((int(a), ((i, j, int(a)),) + bspans + cspans, prob))
        return tuple(out)

    results = []
    for sym, spans, prob in cell(0, l - 1):
        total = float(g.r[sym]) * prob
        if total > 0:
            results.append((ParseTree(length=l, spans=spans), total))
    cell.cache_clear()
    return results


def enumeration_marginals(g: DensePcfg, sentence) -> tuple[np.ndarray, np.ndarray, float]:
    """Span and span-symbol posteriors by brute-force enumeration."""
    sent = as_sentence(sentence)
    l = len(sent)
    trees = enumerate_trees(g, sent)
    total = sum(p for _, p in trees)
    span = np.zeros((l, l))
    symbol = np.zeros((l, l, g.m))
    if total <= 0:
        raise ZeroProbabilityError("no parse")
    for tree, p in trees:
        for i, j, sym in tree.internal_spans:
            span[i, j] += p
            symbol[i, j, sym] += p
    return span / total, symbol / total, math.log(total)
