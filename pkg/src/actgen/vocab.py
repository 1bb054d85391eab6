"""Token vocabulary with fixed reserved ids and a one-token-per-line file format."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

PAD, UNK, BOS, EOS, POOL, USR, SYS = range(7)
RESERVED = ("[PAD]", "[UNK]", "[BOS]", "[EOS]", "[POOL]", "[USR]", "[SYS]")


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization over lowercased text."""
    return text.lower().split()


class Vocabulary:
    """Maps tokens to ids; ids 0..6 are reserved, the rest follow file order."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens: list[str] = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._ids = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK)

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @classmethod
    def build(cls, token_streams: Iterable[Iterable[str]], max_size: int | None = None
              ) -> "Vocabulary":
        """Collect the most frequent tokens, ties broken by first appearance."""
        counts: Counter = Counter()
        order: dict[str, int] = {}
        for stream in token_streams:
            for tok in stream:
                counts[tok] += 1
                order.setdefault(tok, len(order))
        ranked = sorted(counts, key=lambda t: (-counts[t], order[t]))
        if max_size is not None:
            ranked = ranked[: max(0, max_size - len(RESERVED))]
        return cls(ranked)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.strip()]
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"vocabulary file must start with reserved tokens {RESERVED}")
        return cls(tokens[len(RESERVED):])
