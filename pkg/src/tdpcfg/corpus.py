"""Treebank ingestion, preprocessing and synthetic-corpus sampling.

The preprocessing pipeline mirrors the usual unsupervised-parsing setup:
punctuation leaves are removed by preterminal tag, unary chains left
behind are collapsed, trees that shrink below two tokens are dropped,
and the vocabulary keeps the most frequent training words with a single
unknown bucket for everything else.  Words are not lowercased or
otherwise normalized.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import SamplingError, ShapeError, TreebankError
from .grammar import TdPcfg
from .inside import Sentence
from .symbols import SymbolTable, Vocabulary

# Standard treebank punctuation/trace preterminal tags; override per corpus.
DEFAULT_PUNCT_TAGS = frozenset(
    {".", ",", ":", "``", "''", "-LRB-", "-RRB-", "-NONE-", "PU", "PUNC", "PUNCT"}
)


@dataclass(frozen=True)
class TreeNode:
    """A constituency tree node.

    Preterminal nodes carry exactly one terminal word in `word` and have
    no children; internal nodes have children and no word.
    """

    label: str
    children: tuple["TreeNode", ...] = ()
    word: str | None = None

    def __post_init__(self):
        if not self.label:
            raise TreebankError("empty node label")
        if (self.word is None) == (not self.children):
            raise TreebankError(f"node {self.label!r} must have children xor a word")

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.word]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out


def tokens(tree: TreeNode) -> list[str]:
    return tree.leaves()


# ---------------------------------------------------------------------------
# bracketed-format reader / writer


def _tokenize_brackets(text: str):
    """Yield ('(', line), (')', line) or (atom, line) tokens."""
    line = 1
    atom = []
    atom_line = line
    for ch in text:
        if ch == "\n":
            line += 1
        if ch in "()" or ch.isspace():
            if atom:
                yield "".join(atom), atom_line
                atom = []
            if ch == "(":
                yield "(", line
            elif ch == ")":
                yield ")", line
        else:
            if not atom:
                atom_line = line
            atom.append(ch)
    if atom:
        yield "".join(atom), atom_line


def _build(label: str, parts: list, line: int) -> TreeNode:
    if len(parts) == 1 and isinstance(parts[0], str):
        return TreeNode(label=label, word=parts[0])
    children = []
    for part in parts:
        if isinstance(part, str):
            # bare word among constituents: wrap as its own preterminal
            children.append(TreeNode(label=part, word=part))
        else:
            children.append(part)
    if not children:
        raise TreebankError("constituent with no children", line)
    return TreeNode(label=label, children=tuple(children))


def parse_trees(text: str) -> list[TreeNode]:
    """Parse bracketed trees from text (one per line or multi-line)."""
    trees: list[TreeNode] = []
    stack: list[tuple[str, list, int]] = []
    label_pending = False
    for tok, line in _tokenize_brackets(text):
        if tok == "(":
            stack.append(("", [], line))
            label_pending = True
        elif tok == ")":
            if not stack:
                raise TreebankError("unbalanced ')'", line)
            label, parts, open_line = stack.pop()
            if not label and len(parts) == 1 and not isinstance(parts[0], str):
                node = parts[0]  # anonymous root wrapper: ( (S ...) )
            else:
                node = _build(label or "ROOT", parts, open_line)
            if stack:
                stack[-1][1].append(node)
                label_pending = False
            else:
                trees.append(node)
        else:
            if label_pending and stack:
                stack[-1] = (tok, stack[-1][1], stack[-1][2])
                label_pending = False
            elif stack:
                stack[-1][1].append(tok)
            else:
                raise TreebankError(f"stray token {tok!r} outside any tree", line)
    if stack:
        raise TreebankError("unbalanced '(' at end of input", stack[-1][2])
    return trees


def read_treebank(path) -> list[TreeNode]:
    with open(path, encoding="utf-8") as fh:
        return parse_trees(fh.read())


def tree_to_string(tree: TreeNode) -> str:
    if tree.is_leaf:
        return f"({tree.label} {tree.word})"
    inner = " ".join(tree_to_string(c) for c in tree.children)
    return f"({tree.label} {inner})"


def write_treebank(trees: list[TreeNode], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tree in trees:
            fh.write(tree_to_string(tree) + "\n")


# ---------------------------------------------------------------------------
# preprocessing


def _strip(node: TreeNode, punct: frozenset[str]) -> TreeNode | None:
    if node.is_leaf:
        return None if node.label in punct else node
    kept = [c for c in (_strip(child, punct) for child in node.children) if c is not None]
    if not kept:
        return None
    if len(kept) == 1:
        child = kept[0]
        if child.is_leaf:
            return child  # collapse X -> (TAG word) to the preterminal
        return TreeNode(label=node.label, children=child.children)
    return TreeNode(label=node.label, children=tuple(kept))


def preprocess(trees: list[TreeNode], punct_tags=DEFAULT_PUNCT_TAGS,
               min_tokens: int = 2) -> list[TreeNode]:
    """Remove punctuation leaves, collapse unary chains, drop tiny trees.

    Idempotent; trees reduced below `min_tokens` tokens disappear from
    the result (callers report the count).
    """
    punct = frozenset(punct_tags)
    out = []
    for tree in trees:
        stripped = _strip(tree, punct)
        if stripped is not None and not stripped.is_leaf \
                and len(stripped.leaves()) >= min_tokens:
            out.append(stripped)
    return out


def build_vocab(trees: list[TreeNode], size: int = 10000) -> Vocabulary:
    """Most frequent `size` training words plus a single unknown bucket.

    Frequency ties go to the earlier first occurrence.  Development and
    test text must be encoded with the vocabulary built here.
    """
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    pos = 0
    for tree in trees:
        for word in tree.leaves():
            counts[word] += 1
            if word not in first_seen:
                first_seen[word] = pos
            pos += 1
    ranked = sorted(counts, key=lambda w: (-counts[w], first_seen[w]))[:size]
    words = tuple(ranked) + ("<unk>",)
    unk_count = sum(counts[w] for w in counts) - sum(counts[w] for w in ranked)
    return Vocabulary(
        words=words,
        counts=tuple(counts[w] for w in ranked) + (unk_count,),
        unk_id=len(words) - 1,
    )


def encode_corpus(trees: list[TreeNode], vocab: Vocabulary) -> list[Sentence]:
    return [Sentence(tuple(vocab.encode(tree.leaves()))) for tree in trees]


# ---------------------------------------------------------------------------
# gold spans


@dataclass(frozen=True)
class GoldSpanSet:
    """All labeled spans of one tree, single-word tag spans included.

    Trivial-span filtering is an evaluation concern and happens there.
    """

    length: int
    spans: tuple[tuple[int, int, str], ...]

    def labeled(self) -> tuple[tuple[int, int, str], ...]:
        return self.spans

    def brackets(self) -> frozenset[tuple[int, int]]:
        return frozenset((i, j) for i, j, _ in self.spans if j > i)


def gold_spans(tree: TreeNode) -> GoldSpanSet:
    """One (i, j, label) per node over the token positions it covers."""
    spans: list[tuple[int, int, str]] = []

    def walk(node: TreeNode, start: int) -> int:
        if node.is_leaf:
            spans.append((start, start, node.label))
            return start + 1
        pos = start
        for child in node.children:
            pos = walk(child, pos)
        spans.append((start, pos - 1, node.label))
        return pos

    total = walk(tree, 0)
    return GoldSpanSet(length=total, spans=tuple(spans))


# ---------------------------------------------------------------------------
# demo grammar for synthetic corpora


def demo_grammar(seed: int = 0) -> TdPcfg:
    """Hand-built hierarchical toy grammar (n=8, p=16, q=40).

    A small naturalistic language: sentences are NP + VP, noun phrases
    start with a determiner and may stack adjectives, verb phrases take
    an object, a prepositional phrase or an adverb.  The sixteen
    preterminals fall into word classes with disjoint vocabulary blocks,
    which makes the tree structure of sampled corpora reliably
    recoverable; useful for end-to-end demos and learning-sanity checks.
    The seed only perturbs the within-class word distributions.
    """
    n, p, q, d = 8, 16, 40, 5
    m = n + p
    rng = np.random.default_rng(seed)
    classes = {
        "D": ([0, 1], range(0, 4)),
        "A": ([2, 3, 4], range(4, 10)),
        "N": ([5, 6, 7, 8], range(10, 20)),
        "V": ([9, 10, 11, 12], range(20, 30)),
        "P": ([13, 14], range(30, 34)),
        "ADV": ([15], range(34, 40)),
    }

    def unif_class(name: str) -> np.ndarray:
        vec = np.zeros(m)
        ids = classes[name][0]
        vec[[n + i for i in ids]] = 1.0 / len(ids)
        return vec

    def onehot(sym: int) -> np.ndarray:
        vec = np.zeros(m)
        vec[sym] = 1.0
        return vec

    S, NP, VP, NBAR, PP = 0, 1, 2, 3, 4
    V = np.zeros((m, d))
    W = np.zeros((m, d))
    U = np.zeros((n, d))
    V[:, 0] = onehot(NP)
    W[:, 0] = onehot(VP)
    U[S, 0] = 1.0
    V[:, 1] = unif_class("D")
    W[:, 1] = 0.6 * unif_class("N") + 0.4 * onehot(NBAR)
    U[NP, 1] = 1.0
    V[:, 2] = unif_class("A")
    W[:, 2] = 0.7 * unif_class("N") + 0.3 * onehot(NBAR)
    U[NBAR, 2] = 1.0
    V[:, 3] = unif_class("V")
    W[:, 3] = 0.5 * onehot(NP) + 0.3 * onehot(PP) + 0.2 * unif_class("ADV")
    U[VP, 3] = 1.0
    V[:, 4] = unif_class("P")
    W[:, 4] = onehot(NP)
    U[PP, 4] = 1.0
    for spare in (5, 6, 7):  # unreachable rows still need valid distributions
        U[spare, 0] = 1.0
    Q = np.zeros((p, q))
    for _name, (ids, block) in classes.items():
        block = list(block)
        for i in ids:
            weights = np.maximum(rng.gamma(0.35, 1.0, size=len(block)), 1e-12)
            Q[i, block] = weights / weights.sum()
    r = np.zeros(n)
    r[S] = 1.0
    return TdPcfg(U=U, V=V, W=W, Q=Q, r=r)


# ---------------------------------------------------------------------------
# ancestral sampling


class _Budget:
    __slots__ = ("leaves_left", "depth_cap")

    def __init__(self, max_length: int, depth_cap: int):
        self.leaves_left = max_length
        self.depth_cap = depth_cap


class _Reject(Exception):
    pass


def sample_corpus(g: TdPcfg, count: int, max_length: int, seed: int,
                  symtab: SymbolTable | None = None, max_depth: int = 64,
                  min_length: int = 1) -> list[TreeNode]:
    """Sample `count` sentences with their true parses from the grammar.

    Top-down generation from the start distribution; derivations longer
    than max_length (or deeper than max_depth) are rejected and redrawn.
    Deterministic for a fixed seed.  Errors out if more than 99% of
    attempts get rejected, which signals a grammar whose expected length
    diverges (or a hopeless max_length).
    """
    if symtab is None:
        symtab = SymbolTable(n=g.n, p=g.p, vocab=Vocabulary.synthetic(g.q))
    rng = np.random.default_rng(seed)
    m = g.m

    def expand(sym: int, depth: int, budget: _Budget) -> TreeNode:
        if depth > budget.depth_cap:
            raise _Reject
        if sym >= g.n:  # preterminal: emit one word
            if budget.leaves_left <= 0:
                raise _Reject
            budget.leaves_left -= 1
            word = int(rng.choice(g.q, p=g.Q[sym - g.n]))
            return TreeNode(label=symtab.symbol_name(sym),
                            word=symtab.vocab.word_of(word))
        comp = int(rng.choice(g.d, p=g.U[sym]))
        left = int(rng.choice(m, p=g.V[:, comp]))
        right = int(rng.choice(m, p=g.W[:, comp]))
        lnode = expand(left, depth + 1, budget)
        rnode = expand(right, depth + 1, budget)
        return TreeNode(label=symtab.symbol_name(sym), children=(lnode, rnode))

    trees: list[TreeNode] = []
    attempts = 0
    while len(trees) < count:
        attempts += 1
        if attempts >= 200 and len(trees) < attempts * 0.01:
            raise SamplingError(
                f"rejected {attempts - len(trees)}/{attempts} derivations; the grammar's "
                "expected sentence length likely diverges -- raise max_length/max_depth "
                "or use a grammar with shorter derivations"
            )
        budget = _Budget(max_length, max_depth)
        root = int(rng.choice(g.n, p=g.r))
        try:
            tree = expand(root, 0, budget)
        except _Reject:
            continue
        if len(tree.leaves()) < min_length:
            continue
        trees.append(tree)
    return trees
