"""In-corpus CBOW and skip-gram embedding training with negative sampling.

The trainer prepares (center, context, negatives) index arrays per
sentence in NumPy and hands the arithmetic to the active kernel backend,
so results are deterministic for a fixed seed on either backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInputError, ParseError
from .text import PAD_INDEX, Vocabulary

NOISE_POWER = 0.75  # unigram distribution exponent for negative sampling


@dataclass
class EmbeddingMatrix:
    """One row per vocabulary word plus the zero PAD row at index 0."""

    vectors: np.ndarray
    vocab: Vocabulary
    trainable: bool = True

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def copy(self) -> "EmbeddingMatrix":
        return EmbeddingMatrix(self.vectors.copy(), self.vocab, self.trainable)


def _encode_corpus(corpus, vocab):
    encoded = []
    for sent in corpus:
        idx = [vocab.index(t) for t in sent]
        idx = [i for i in idx if i != PAD_INDEX]
        if idx:
            encoded.append(np.asarray(idx, dtype=np.intp))
    return encoded


def _noise_cumulative(encoded, vocab_size):
    counts = np.zeros(vocab_size + 1)
    for sent in encoded:
        np.add.at(counts, sent, 1.0)
    weights = counts[1:] ** NOISE_POWER
    total = weights.sum()
    if total <= 0:
        raise InvalidInputError("empty training corpus")
    return np.cumsum(weights / total)


def _draw_negatives(rng, cum, shape):
    # inverse-CDF sampling over word indices 1..V
    return np.searchsorted(cum, rng.random(shape)).astype(np.intp) + 1


def _sg_pairs(sent, window):
    centers = []
    contexts = []
    L = len(sent)
    for i in range(L):
        lo = max(0, i - window)
        hi = min(L, i + window + 1)
        for j in range(lo, hi):
            if j != i:
                centers.append(sent[i])
                contexts.append(sent[j])
    return np.asarray(centers, dtype=np.intp), np.asarray(contexts, dtype=np.intp)


def _cbow_examples(sent, window):
    flat = []
    offsets = [0]
    centers = []
    L = len(sent)
    for i in range(L):
        lo = max(0, i - window)
        hi = min(L, i + window + 1)
        ctx = [sent[j] for j in range(lo, hi) if j != i]
        if not ctx:
            continue
        flat.extend(ctx)
        offsets.append(len(flat))
        centers.append(sent[i])
    return (
        np.asarray(flat, dtype=np.intp),
        np.asarray(offsets, dtype=np.intp),
        np.asarray(centers, dtype=np.intp),
    )


def train_word2vec(
    corpus,
    mode,
    dim=100,
    window=5,
    negatives=5,
    epochs=5,
    seed=0,
    min_count=2,
    vocab=None,
    learning_rate=0.025,
    min_learning_rate=1e-4,
    epoch_losses=None,
) -> EmbeddingMatrix:
    """Train one embedding half ('cbow' or 'sg') on tokenized sentences.

    Deterministic for a fixed seed. When ``epoch_losses`` is a list, the
    mean negative-sampling loss of each epoch is appended to it.
    """
    if mode not in ("cbow", "sg"):
        raise InvalidInputError(f"mode must be 'cbow' or 'sg', got {mode!r}")
    corpus = list(corpus)
    if not corpus:
        raise InvalidInputError("corpus is empty")
    if vocab is None:
        vocab = Vocabulary.from_corpus(corpus, min_frequency=min_count)
    if len(vocab) == 0:
        raise InvalidInputError("vocabulary is empty after frequency filtering")
    encoded = _encode_corpus(corpus, vocab)
    if not encoded:
        raise InvalidInputError("no in-vocabulary tokens to train on")
    cum = _noise_cumulative(encoded, len(vocab))

    rng = np.random.default_rng(seed)
    win = np.zeros((len(vocab) + 1, dim))
    win[1:] = rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(vocab), dim))
    wout = np.zeros_like(win)

    total_tokens = sum(len(s) for s in encoded) * max(1, epochs)
    done = 0
    for _ in range(epochs):
        order = rng.permutation(len(encoded))
        loss = 0.0
        examples = 0
        for si in order:
            sent = encoded[si]
            lr = max(
                min_learning_rate,
                learning_rate * (1.0 - done / total_tokens),
            )
            if mode == "sg":
                centers, contexts = _sg_pairs(sent, window)
                if len(centers):
                    negs = _draw_negatives(rng, cum, (len(centers), negatives))
                    targets = np.column_stack([contexts, negs])
                    loss += kernels.sg_train(win, wout, centers, targets, lr)
                    examples += len(centers)
            else:
                flat, offsets, centers = _cbow_examples(sent, window)
                if len(centers):
                    negs = _draw_negatives(rng, cum, (len(centers), negatives))
                    targets = np.column_stack([centers, negs])
                    loss += kernels.cbow_train(win, wout, flat, offsets, targets, lr)
                    examples += len(centers)
            done += len(sent)
        if epoch_losses is not None:
            epoch_losses.append(loss / max(1, examples))

    win[0] = 0.0
    return EmbeddingMatrix(win, vocab, trainable=True)


def concat_embeddings(first: EmbeddingMatrix, second: EmbeddingMatrix) -> EmbeddingMatrix:
    """Row-wise concatenation of two matrices over the same vocabulary."""
    if first.vectors.shape[0] != second.vectors.shape[0]:
        raise InvalidInputError(
            f"row count mismatch: {first.vectors.shape[0]} vs "
            f"{second.vectors.shape[0]}"
        )
    if first.vocab.index_to_token != second.vocab.index_to_token:
        raise InvalidInputError("embeddings were built over different vocabularies")
    return EmbeddingMatrix(
        np.hstack([first.vectors, second.vectors]), first.vocab, first.trainable
    )


def save_embeddings(embeddings: EmbeddingMatrix, path):
    """Write the textual word-vector format: 'V d' header, one word per line."""
    vocab = embeddings.vocab
    v = len(vocab)
    d = embeddings.dim
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{v} {d}\n")
        for i in range(1, v + 1):
            row = " ".join(f"{x:.8g}" for x in embeddings.vectors[i])
            fh.write(f"{vocab.token(i)} {row}\n")


def load_embeddings(path) -> EmbeddingMatrix:
    """Read the textual word-vector format written by save_embeddings."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("expected header 'V d'", line=1)
        try:
            v, d = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError("header fields must be integers", line=1) from None
        vectors = np.zeros((v + 1, d))
        tokens = []
        for lineno in range(2, v + 2):
            line = fh.readline()
            if not line:
                raise ParseError(f"expected {v} word lines, file ends early",
                                 line=lineno)
            parts = line.split()
            if len(parts) != d + 1:
                raise ParseError(
                    f"expected 1 token + {d} values, got {len(parts)} fields",
                    line=lineno,
                )
            tokens.append(parts[0])
            try:
                vectors[lineno - 1] = [float(x) for x in parts[1:]]
            except ValueError:
                raise ParseError("non-numeric vector component", line=lineno) from None
    return EmbeddingMatrix(vectors, Vocabulary.from_tokens(tokens), trainable=True)
