"""tiledsent: sentiment classification with tiled and cluster-masked
1-D convolutions on a minimal reverse-mode autodiff engine."""

__version__ = "0.1.0"

from .tensor import Tensor
from .text import EncodedSequence, Vocabulary, encode, tokenize
from .word2vec import EmbeddingMatrix

__all__ = [
    "__version__",
    "Tensor",
    "Vocabulary",
    "EncodedSequence",
    "EmbeddingMatrix",
    "encode",
    "tokenize",
]
