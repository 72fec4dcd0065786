"""Evaluation metrics: sentence-level F1, per-label recall, nonterminal /
gold-label correspondence and constituent cluster reports.

All bracket comparisons are unlabeled and exclude trivial spans, i.e.
single-word spans and the whole-sentence span, from both sides.
Sentences whose gold span set is empty after that filter are excluded
from corpus averages (and counted), rather than scored 0 or 100.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import GoldSpanSet
from .decoder import ParseTree
from .errors import ShapeError

DEFAULT_RECALL_LABELS = ("NP", "VP", "PP", "SBAR", "ADJP", "ADVP")


def _nontrivial(brackets, length: int) -> set[tuple[int, int]]:
    return {
        (i, j)
        for i, j in brackets
        if j > i and not (i == 0 and j == length - 1)
    }


def sentence_f1(gold: GoldSpanSet, pred: ParseTree) -> float | None:
    """Unlabeled bracketing F1 in [0, 100] for one sentence.

    Duplicate gold spans count once.  Returns None when the gold set is
    empty after trivial-span removal (the sentence cannot be scored).
    """
    if gold.length != pred.length:
        raise ShapeError(
            f"token count mismatch: gold has {gold.length}, prediction has {pred.length}"
        )
    gold_set = _nontrivial(gold.brackets(), gold.length)
    if not gold_set:
        return None
    pred_set = _nontrivial(pred.brackets(), pred.length)
    match = len(gold_set & pred_set)
    precision = match / len(pred_set) if pred_set else 0.0
    recall = match / len(gold_set)
    if precision + recall == 0.0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def corpus_f1(golds: list[GoldSpanSet], preds: list[ParseTree]) -> tuple[float, int]:
    """Mean sentence-level F1 and the number of skipped sentences."""
    if len(golds) != len(preds):
        raise ShapeError(f"{len(golds)} gold sentences vs {len(preds)} predictions")
    scores = []
    skipped = 0
    for gold, pred in zip(golds, preds):
        f1 = sentence_f1(gold, pred)
        if f1 is None:
            skipped += 1
        else:
            scores.append(f1)
    mean = sum(scores) / len(scores) if scores else 0.0
    return mean, skipped


def biased_std(values) -> float:
    """Population standard deviation (divisor N)."""
    xs = list(values)
    if not xs:
        return 0.0
    mean = sum(xs) / len(xs)
    return math.sqrt(sum((x - mean) ** 2 for x in xs) / len(xs))


def recall_by_label(golds: list[GoldSpanSet], preds: list[ParseTree],
                    labels=DEFAULT_RECALL_LABELS) -> dict[str, float | None]:
    """Fraction of gold constituents per label whose span was predicted.

    Unlabeled span match, trivial spans excluded.  Labels absent from the
    gold corpus map to None (undefined), not 0.
    """
    if len(golds) != len(preds):
        raise ShapeError(f"{len(golds)} gold sentences vs {len(preds)} predictions")
    found: Counter[str] = Counter()
    total: Counter[str] = Counter()
    for gold, pred in zip(golds, preds):
        pred_set = _nontrivial(pred.brackets(), pred.length)
        keep = _nontrivial(gold.brackets(), gold.length)
        for i, j, label in gold.labeled():
            if (i, j) not in keep or label not in labels:
                continue
            total[label] += 1
            if (i, j) in pred_set:
                found[label] += 1
    return {
        label: (100.0 * found[label] / total[label] if total[label] else None)
        for label in labels
    }


@dataclass
class Correspondence:
    """Row-stochastic matrix: gold label -> predicted nonterminal share."""

    row_labels: list[str]
    column_symbols: list[str]  # "NT-<id>" names plus trailing "OTHER"
    matrix: np.ndarray

    def row(self, label: str) -> np.ndarray:
        return self.matrix[self.row_labels.index(label)]


def label_correspondence(golds: list[GoldSpanSet], preds: list[ParseTree],
                         top_k: int = 30, top_labels: int = 7) -> Correspondence:
    """Distribution of predicted nonterminals per gold label.

    Restricted to correctly predicted constituents (unlabeled span
    match, trivial spans excluded).  Columns are the top_k globally most
    predicted nonterminals plus OTHER; rows are the top_labels most
    frequent gold labels plus OTHER.  Empty rows are dropped so every
    remaining row sums to 1.
    """
    if len(golds) != len(preds):
        raise ShapeError(f"{len(golds)} gold sentences vs {len(preds)} predictions")
    sym_freq: Counter[int] = Counter()
    gold_freq: Counter[str] = Counter()
    pairs: list[tuple[str, int]] = []
    for gold, pred in zip(golds, preds):
        keep_pred = _nontrivial(pred.brackets(), pred.length)
        keep_gold = _nontrivial(gold.brackets(), gold.length)
        label_at = {(i, j): lab for i, j, lab in gold.labeled() if (i, j) in keep_gold}
        for i, j, sym in pred.internal_spans:
            if (i, j) not in keep_pred:
                continue
            if sym is None:
                raise ShapeError("correspondence needs labeled predictions")
            sym_freq[sym] += 1
            if (i, j) in label_at:
                pairs.append((label_at[(i, j)], sym))
        for lab in label_at.values():
            gold_freq[lab] += 1

    main_syms = [s for s, _ in sym_freq.most_common(top_k)]
    main_labels = [lab for lab, _ in gold_freq.most_common(top_labels)]
    col_of = {s: idx for idx, s in enumerate(main_syms)}
    row_of = {lab: idx for idx, lab in enumerate(main_labels)}
    rows = main_labels + ["OTHER"]
    matrix = np.zeros((len(rows), len(main_syms) + 1))
    for lab, sym in pairs:
        r = row_of.get(lab, len(main_labels))
        c = col_of.get(sym, len(main_syms))
        matrix[r, c] += 1.0
    sums = matrix.sum(axis=1)
    keep = sums > 0
    matrix = matrix[keep] / sums[keep, None]
    return Correspondence(
        row_labels=[lab for lab, k in zip(rows, keep) if k],
        column_symbols=[f"NT-{s}" for s in main_syms] + ["OTHER"],
        matrix=matrix,
    )


def cluster_report(sentences: list[list[str]], preds: list[ParseTree],
                   nonterminal: int, top_n: int = 20) -> list[tuple[str, int]]:
    """Most frequent word sequences predicted under one nonterminal."""
    if len(sentences) != len(preds):
        raise ShapeError(f"{len(sentences)} sentences vs {len(preds)} predictions")
    phrases: Counter[str] = Counter()
    for toks, pred in zip(sentences, preds):
        for i, j, sym in pred.internal_spans:
            if sym == nonterminal:
                phrases[" ".join(toks[i:j + 1])] += 1
    return phrases.most_common(top_n)


@dataclass
class EvalReport:
    mean_f1: float
    per_seed_f1: list[float]
    f1_std: float
    recall: dict[str, float | None]
    skipped: int
    correspondence: Correspondence | None = None
    extra: dict[str, float] = field(default_factory=dict)

    def rows(self) -> list[tuple[str, str, str]]:
        """Machine-readable (metric, value, seed) rows."""
        out = [("mean_f1", f"{self.mean_f1:.6f}", "all"),
               ("f1_std", f"{self.f1_std:.6f}", "all"),
               ("skipped_sentences", str(self.skipped), "all")]
        for idx, f1 in enumerate(self.per_seed_f1):
            out.append(("f1", f"{f1:.6f}", str(idx)))
        for label, value in self.recall.items():
            out.append((f"recall_{label}",
                        "undefined" if value is None else f"{value:.6f}", "all"))
        for key, value in self.extra.items():
            out.append((key, f"{value:.6f}", "all"))
        return out


def random_tree(length: int, rng: np.random.Generator) -> ParseTree:
    """Uniform recursive-split random binary tree (baseline parser)."""
    spans: list[tuple[int, int, int | None]] = []

    def build(i, j):
        if i == j:
            return
        spans.append((i, j, None))
        k = i + int(rng.integers(0, j - i))
        build(i, k)
        build(k + 1, j)

    build(0, length - 1)
    return ParseTree(length=length, spans=tuple(spans))
