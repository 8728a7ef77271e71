"""Tokenization, vocabulary construction, and sequence encoding.

Index 0 is reserved for the PAD token; it doubles as the out-of-vocabulary
index so that masked-input construction can treat "unknown" and "masked
out" uniformly.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

PAD_INDEX = 0
PAD_TOKEN = "PAD"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str):
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    """Bijective token <-> index mapping over indices 1..V; 0 is PAD."""

    token_to_index: dict
    index_to_token: list
    min_frequency: int = 1
    counts: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_corpus(cls, sentences, min_frequency=2) -> "Vocabulary":
        """Build from token lists, keeping tokens seen >= min_frequency times.

        Tokens are ordered by descending frequency (ties alphabetically)
        so construction is deterministic.
        """
        counts = Counter()
        for sent in sentences:
            counts.update(sent)
        kept = sorted(
            (tok for tok, c in counts.items() if c >= min_frequency),
            key=lambda tok: (-counts[tok], tok),
        )
        index_to_token = [PAD_TOKEN] + kept
        token_to_index = {tok: i for i, tok in enumerate(kept, start=1)}
        return cls(token_to_index, index_to_token, min_frequency,
                   {tok: counts[tok] for tok in kept})

    @classmethod
    def from_tokens(cls, tokens) -> "Vocabulary":
        """Build from an explicit token order (index i+1 for the i-th token)."""
        seen = []
        for tok in tokens:
            if tok not in seen:
                seen.append(tok)
        return cls({tok: i for i, tok in enumerate(seen, start=1)},
                   [PAD_TOKEN] + seen, min_frequency=1)

    def __len__(self):
        """Number of real tokens (PAD excluded)."""
        return len(self.index_to_token) - 1

    def index(self, token: str) -> int:
        """Index of a token; unknown tokens map to PAD (0)."""
        return self.token_to_index.get(token, PAD_INDEX)

    def token(self, index: int) -> str:
        return self.index_to_token[index]


@dataclass
class EncodedSequence:
    """Token indices padded/truncated to a fixed length."""

    indices: np.ndarray
    original_length: int

    def __len__(self):
        return len(self.indices)

    def to_text(self, vocab: Vocabulary) -> str:
        """Space-separated tokens with literal 'PAD' at index-0 positions."""
        return " ".join(vocab.token(int(i)) for i in self.indices)


def encode(tokens, vocab: Vocabulary, max_len: int) -> EncodedSequence:
    """Map tokens to indices, right-pad with 0 to max_len, truncate beyond.

    Out-of-vocabulary tokens map to PAD.
    """
    if max_len < 1:
        raise InvalidInputError("max_len must be a positive integer")
    idx = np.zeros(max_len, dtype=np.intp)
    for pos, tok in enumerate(tokens[:max_len]):
        idx[pos] = vocab.index(tok)
    return EncodedSequence(idx, original_length=len(tokens))


def suggest_max_len(token_lists, percentile=95.0, minimum=4) -> int:
    """Default sequence cap: the given percentile of corpus lengths."""
    lengths = [len(t) for t in token_lists if t]
    if not lengths:
        return minimum
    return max(minimum, int(np.percentile(lengths, percentile)))
