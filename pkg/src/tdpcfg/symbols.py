"""Symbol index layout and terminal vocabulary.

Grammar symbols live in a single integer range: nonterminal ids occupy
[0, n), preterminal ids occupy [n, m) with m = n + p.  Terminals have
their own dense id range [0, q).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ShapeError

UNK = "<unk>"


@dataclass(frozen=True)
class Vocabulary:
    """Dense terminal-id assignment with an unknown-word bucket."""

    words: tuple[str, ...]
    counts: tuple[int, ...]
    unk_id: int
    word_to_id: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.word_to_id:
            object.__setattr__(
                self, "word_to_id", {w: i for i, w in enumerate(self.words)}
            )
        if len(self.word_to_id) != len(self.words):
            raise ShapeError("duplicate words in vocabulary")
        if not (0 <= self.unk_id < len(self.words)):
            raise ShapeError("unk_id outside vocabulary range")

    @property
    def size(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        return self.word_to_id.get(word, self.unk_id)

    def word_of(self, idx: int) -> str:
        return self.words[idx]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    @staticmethod
    def synthetic(q: int) -> "Vocabulary":
        """q distinct placeholder terminals (used by sampled corpora)."""
        words = tuple(f"w{i}" for i in range(q))
        return Vocabulary(words=words, counts=(0,) * q, unk_id=0)


@dataclass(frozen=True)
class SymbolTable:
    """Counts and index conventions for one grammar.

    n nonterminals at ids [0, n), p preterminals at [n, m), vocabulary of
    q terminals.
    """

    n: int
    p: int
    vocab: Vocabulary

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ShapeError("need at least one nonterminal and one preterminal")

    @property
    def m(self) -> int:
        return self.n + self.p

    @property
    def q(self) -> int:
        return self.vocab.size

    def is_nonterminal(self, sym: int) -> bool:
        return 0 <= sym < self.n

    def is_preterminal(self, sym: int) -> bool:
        return self.n <= sym < self.m

    def symbol_name(self, sym: int) -> str:
        if self.is_nonterminal(sym):
            return f"NT-{sym}"
        if self.is_preterminal(sym):
            return f"PT-{sym - self.n}"
        raise ShapeError(f"symbol id {sym} outside [0, {self.m})")

    def symbol_id(self, name: str) -> int:
        if name.startswith("NT-"):
            sym = int(name[3:])
        elif name.startswith("PT-"):
            sym = int(name[3:]) + self.n
        else:
            raise ShapeError(f"not a symbol name: {name!r}")
        if not 0 <= sym < self.m:
            raise ShapeError(f"symbol {name!r} outside table")
        return sym
