"""Token vocabulary with reserved symbols and normalization placeholders."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from ..errors import EmptyCorpus

PAD, BOS, EOS, SEP, UNK = "<pad>", "<bos>", "<eos>", "<sep>", "<unk>"
RESERVED = (PAD, BOS, EOS, SEP, UNK)
PAD_ID, BOS_ID, EOS_ID, SEP_ID, UNK_ID = range(5)

PLACEHOLDER_CLASSES = ("var", "func", "type")
DEFAULT_PLACEHOLDER_MAX = 8


def placeholder_tokens(max_index: int = DEFAULT_PLACEHOLDER_MAX) -> list:
    return [f"_<{cls}{n}>_" for cls in PLACEHOLDER_CLASSES
            for n in range(1, max_index + 1)]


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple  # id -> token text

    def __post_init__(self):
        if self.tokens[:5] != RESERVED:
            raise ValueError("vocabulary must start with the reserved symbols")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def to_json(self) -> list:
        return list(self.tokens)

    @staticmethod
    def from_json(tokens) -> "Vocabulary":
        return Vocabulary(tuple(tokens))


def build_vocab(token_stream, min_count: int = 2,
                placeholder_max: int = DEFAULT_PLACEHOLDER_MAX) -> Vocabulary:
    """Tokens seen at least `min_count` times, ids ordered by count then text.

    Reserved symbols and normalization placeholders are always present.
    """
    counts = Counter()
    empty = True
    for token in token_stream:
        empty = False
        counts[token] += 1
    if empty:
        raise EmptyCorpus("cannot build a vocabulary from an empty stream")

    fixed = list(RESERVED) + placeholder_tokens(placeholder_max)
    fixed_set = set(fixed)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count and t not in fixed_set),
        key=lambda t: (-counts[t], t))
    return Vocabulary(tuple(fixed + kept))
