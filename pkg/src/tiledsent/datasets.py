"""Dataset ingestion: review folders, tab-separated tweet files, and a
synthetic keyword-labelled corpus for pipeline checks."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ParseError

BINARY_LABELS = ["negative", "positive"]           # label 1 = positive
TERNARY_LABELS = ["positive", "neutral", "negative"]


@dataclass
class LabeledDataset:
    name: str
    texts: list
    labels: np.ndarray
    label_names: list = field(default_factory=lambda: list(BINARY_LABELS))

    def __len__(self):
        return len(self.texts)

    @property
    def num_classes(self) -> int:
        return len(self.label_names)


def load_review_directory(path, name="imdb") -> LabeledDataset:
    """Directory layout: pos/ and neg/ folders of *.txt files (one review
    each). Files are read in sorted order so loading is deterministic."""
    texts, labels = [], []
    for sub, label in (("neg", 0), ("pos", 1)):
        folder = os.path.join(path, sub)
        if not os.path.isdir(folder):
            raise InvalidInputError(f"missing review folder: {folder}")
        for fname in sorted(os.listdir(folder)):
            if not fname.endswith(".txt"):
                continue
            with open(os.path.join(folder, fname), "r", encoding="utf-8",
                      errors="replace") as fh:
                texts.append(fh.read())
            labels.append(label)
    if not texts:
        raise InvalidInputError(f"no .txt review files under {path}")
    return LabeledDataset(name, texts, np.asarray(labels), list(BINARY_LABELS))


def load_tsv(path, label_names, name) -> LabeledDataset:
    """Lines of 'id<TAB>label<TAB>text'."""
    index = {lab: i for i, lab in enumerate(label_names)}
    texts, labels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t", 2)
            if len(parts) != 3:
                raise ParseError("expected 'id<TAB>label<TAB>text'", line=lineno)
            if parts[1] not in index:
                raise ParseError(
                    f"unknown label {parts[1]!r}; expected one of {label_names}",
                    line=lineno,
                )
            labels.append(index[parts[1]])
            texts.append(parts[2])
    if not texts:
        raise InvalidInputError(f"no records in {path}")
    return LabeledDataset(name, texts, np.asarray(labels), list(label_names))


def load_semeval(path) -> LabeledDataset:
    return load_tsv(path, TERNARY_LABELS, name="semeval")


def load_synthetic(path) -> LabeledDataset:
    return load_tsv(path, BINARY_LABELS, name="synthetic")


def save_tsv(dataset: LabeledDataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, (text, label) in enumerate(zip(dataset.texts, dataset.labels)):
            fh.write(f"{i}\t{dataset.label_names[int(label)]}\t{text}\n")


def detect_format(path) -> str:
    """imdb for a pos/neg directory, semeval for a .tsv file."""
    if os.path.isdir(path):
        return "imdb"
    if path.endswith(".tsv"):
        return "semeval"
    raise InvalidInputError(
        f"cannot infer dataset format of {path}; pass an explicit format tag"
    )


def load_dataset(path, fmt) -> LabeledDataset:
    if fmt == "imdb":
        return load_review_directory(path)
    if fmt == "semeval":
        return load_semeval(path)
    if fmt == "synthetic":
        return load_synthetic(path)
    raise InvalidInputError(f"unknown dataset format tag {fmt!r}")


def generate_synthetic(
    num_sentences=2000,
    vocab_size=200,
    keywords_per_class=5,
    min_len=8,
    max_len=18,
    seed=0,
) -> LabeledDataset:
    """Balanced binary corpus where the label is carried by keywords.

    The vocabulary is w000..wNNN; the first 2 * keywords_per_class words
    are reserved as positive/negative keywords and the rest is filler.
    Each sentence is random filler plus one or two keywords of its class,
    so the task is linearly separable from keyword presence.
    """
    if vocab_size <= 2 * keywords_per_class:
        raise InvalidInputError("vocab_size too small for the keyword sets")
    rng = np.random.default_rng(seed)
    words = [f"w{i:03d}" for i in range(vocab_size)]
    pos_kw = words[:keywords_per_class]
    neg_kw = words[keywords_per_class : 2 * keywords_per_class]
    filler = words[2 * keywords_per_class :]

    texts, labels = [], []
    for i in range(num_sentences):
        label = i % 2
        length = int(rng.integers(min_len, max_len + 1))
        sent = [filler[j] for j in rng.integers(0, len(filler), size=length)]
        pool = pos_kw if label == 1 else neg_kw
        for _ in range(int(rng.integers(1, 3))):
            kw = pool[int(rng.integers(0, len(pool)))]
            pos = int(rng.integers(0, len(sent) + 1))
            sent.insert(pos, kw)
        texts.append(" ".join(sent))
        labels.append(label)
    order = rng.permutation(num_sentences)
    return LabeledDataset(
        "synthetic",
        [texts[i] for i in order],
        np.asarray([labels[i] for i in order]),
        list(BINARY_LABELS),
    )
