"""The four sentence classifiers: CNN, TCNN, SHTCNN, and HTCNN.

All share the layout embed -> convolution(s) -> max pooling -> dense ->
output. TCNN swaps the convolution for a tiled one (k filter banks
cycling over window positions); the hybrid models run k parallel
convolutions over per-cluster masked inputs (HTCNN additionally restores
the n-1 neighbors of every in-cluster word) and pool twice: per branch,
then across branches.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib import format as npformat

from . import nn, tiling
from .errors import ConfigError, InvalidInputError
from .tensor import Tensor
from .text import EncodedSequence, Vocabulary
from .word2vec import EmbeddingMatrix

ARCHITECTURES = ("cnn", "tcnn", "shtcnn", "htcnn")
HYBRIDS = ("shtcnn", "htcnn")


@dataclass
class ModelConfig:
    architecture: str
    filter_size: int = 3
    tile_size: int = 1
    feature_maps: int = 100
    hidden_size: int = 64
    conv_activation: str = "relu"
    hidden_activation: str = "tanh"
    output_activation: str = ""       # derived from num_classes when empty
    dropout_pooled: float = 0.3
    dropout_hidden: float = 0.5
    train_embeddings: bool = True
    num_classes: int = 2
    max_len: int = 32

    def __post_init__(self):
        self.architecture = self.architecture.lower()
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(
                f"unknown architecture {self.architecture!r}; "
                f"expected one of {ARCHITECTURES}"
            )
        if self.architecture == "cnn":
            if self.tile_size not in (0, 1):
                raise ConfigError("cnn uses a single filter per feature map (k=1)")
            self.tile_size = 1
        if self.tile_size < 1:
            raise ConfigError("tile size must be positive")
        if self.filter_size < 1:
            raise ConfigError("filter size must be positive")
        if self.max_len < self.filter_size:
            raise ConfigError("max_len must be at least the filter size")
        if self.num_classes < 2:
            raise ConfigError("need at least two classes")
        if not self.output_activation:
            self.output_activation = "sigmoid" if self.num_classes == 2 else "softmax"
        if self.output_activation == "sigmoid" and self.num_classes != 2:
            raise ConfigError("sigmoid output requires exactly two classes")
        if self.output_activation not in ("sigmoid", "softmax"):
            raise ConfigError("output activation must be sigmoid or softmax")

    @property
    def output_units(self) -> int:
        return 1 if self.output_activation == "sigmoid" else self.num_classes


class Model:
    """Wired architecture holding the embedding and layer parameters."""

    def __init__(self, config, embedding, conv_w, conv_b, hidden_w, hidden_b,
                 out_w, out_b, cluster_map=None):
        self.config = config
        self.embedding = embedding
        self.conv_w = conv_w
        self.conv_b = conv_b
        self.hidden_w = hidden_w
        self.hidden_b = hidden_b
        self.out_w = out_w
        self.out_b = out_b
        self.cluster_map = cluster_map

    def parameters(self):
        params = [self.conv_w, self.conv_b, self.hidden_w, self.hidden_b,
                  self.out_w, self.out_b]
        if self.embedding.requires_grad:
            params.insert(0, self.embedding)
        return params

    def conv_parameter_count(self) -> int:
        return self.conv_w.size + self.conv_b.size

    def state_arrays(self) -> dict:
        return {
            "embedding": self.embedding.data,
            "conv_w": self.conv_w.data,
            "conv_b": self.conv_b.data,
            "hidden_w": self.hidden_w.data,
            "hidden_b": self.hidden_b.data,
            "out_w": self.out_w.data,
            "out_b": self.out_b.data,
        }

    def copy_state(self) -> dict:
        return {k: v.copy() for k, v in self.state_arrays().items()}

    def load_state(self, state: dict):
        for key, value in state.items():
            getattr(self, key).data[...] = value

    def _indices(self, sequence) -> np.ndarray:
        if isinstance(sequence, EncodedSequence):
            idx = sequence.indices
        else:
            idx = np.asarray(sequence, dtype=np.intp)
        if len(idx) != self.config.max_len:
            raise InvalidInputError(
                f"sequence length {len(idx)} does not match the model's "
                f"configured length {self.config.max_len}"
            )
        return idx

    def forward(self, sequence, training=False, rng=None) -> Tensor:
        """Class probabilities: (1,) for a sigmoid head, (C,) for softmax."""
        cfg = self.config
        idx = self._indices(sequence)
        if training and rng is None:
            raise InvalidInputError("training-mode forward needs an rng for dropout")

        if cfg.architecture in ("cnn", "tcnn"):
            x = nn.embedding_lookup(self.embedding, idx)
            fm = nn.tiled_conv1d(x, self.conv_w, self.conv_b, act=cfg.conv_activation)
            pooled = nn.global_max_pool(fm)
        else:
            branches = []
            for cid in range(1, cfg.tile_size + 1):
                masked = tiling.mask_by_cluster(idx, self.cluster_map, cid)
                if cfg.architecture == "htcnn":
                    masked = tiling.expand_neighbors(masked, idx, cfg.filter_size)
                xb = nn.embedding_lookup(self.embedding, masked.indices)
                fm = nn.conv1d(
                    xb,
                    _slice_first(self.conv_w, cid - 1),
                    _slice_first(self.conv_b, cid - 1),
                    stride=1,
                    act=cfg.conv_activation,
                )
                branches.append(nn.global_max_pool(fm))
            pooled = nn.branch_max(branches)

        pooled = nn.dropout(pooled, cfg.dropout_pooled, rng, training)
        hidden = nn.dense(pooled, self.hidden_w, self.hidden_b,
                          act=cfg.hidden_activation)
        hidden = nn.dropout(hidden, cfg.dropout_hidden, rng, training)
        return nn.dense(hidden, self.out_w, self.out_b, act=cfg.output_activation)

    def predict(self, sequence) -> int:
        """Class label: argmax for softmax, 0.5 threshold for sigmoid
        (0.5 exactly counts as the positive class); ties take the lowest id."""
        out = self.forward(sequence, training=False)
        if self.config.output_activation == "sigmoid":
            return int(out.data.reshape(-1)[0] >= 0.5)
        return int(np.argmax(out.data))

    def loss(self, output: Tensor, label: int, class_weights=None) -> Tensor:
        if self.config.output_activation == "sigmoid":
            w = 1.0 if class_weights is None else float(class_weights[int(label)])
            return nn.binary_cross_entropy(output, label, weight=w)
        if class_weights is None:
            class_weights = np.ones(self.config.num_classes)
        return nn.weighted_categorical_cross_entropy(output, label, class_weights)


def _slice_first(t: Tensor, i: int) -> Tensor:
    """Graph op selecting t[i] along the leading axis."""

    def back(g):
        if t.requires_grad:
            buf = np.zeros_like(t.data)
            buf[i] = g
            t.accumulate_grad(buf)

    return Tensor(t.data[i], t.requires_grad, (t,), back)


def build_model(config: ModelConfig, embeddings: EmbeddingMatrix,
                assignment=None, seed=0) -> Model:
    """Initialize a model: conv/dense weights uniform in [-0.05, 0.05],
    biases zero, embeddings copied from the given matrix."""
    if config.architecture in HYBRIDS:
        if assignment is None:
            raise ConfigError(
                f"{config.architecture} needs a word-cluster assignment"
            )
        if getattr(assignment, "k", None) is not None and assignment.k != config.tile_size:
            raise ConfigError(
                f"assignment has {assignment.k} clusters but the model expects "
                f"{config.tile_size}"
            )
        cluster_map = tiling._cluster_map(assignment)
    else:
        if assignment is not None:
            raise ConfigError(f"{config.architecture} does not take an assignment")
        cluster_map = None

    rng = np.random.default_rng(seed)
    k, F, n, d = (config.tile_size, config.feature_maps, config.filter_size,
                  embeddings.dim)
    trainable = config.train_embeddings and embeddings.trainable
    emb = Tensor(embeddings.vectors.copy(), requires_grad=trainable, name="embedding")
    conv_w = Tensor.param(nn.uniform_init(rng, (k, F, n, d)), name="conv_w")
    conv_b = Tensor.param(np.zeros((k, F)), name="conv_b")
    hidden_w = Tensor.param(nn.uniform_init(rng, (config.hidden_size, F)),
                            name="hidden_w")
    hidden_b = Tensor.param(np.zeros(config.hidden_size), name="hidden_b")
    out_w = Tensor.param(nn.uniform_init(rng, (config.output_units,
                                               config.hidden_size)), name="out_w")
    out_b = Tensor.param(np.zeros(config.output_units), name="out_b")
    return Model(config, emb, conv_w, conv_b, hidden_w, hidden_b, out_w, out_b,
                 cluster_map)


# -- checkpoints ---------------------------------------------------------------


def _write_deterministic_zip(path, arrays: dict):
    # plain np.savez stamps file mtimes into the archive; fixing the date
    # keeps checkpoint bytes identical across runs with the same seed
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            npformat.write_array(buf, np.asarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def save_checkpoint(model: Model, vocab: Vocabulary, path):
    """Config echo, vocabulary, cluster map, and all parameter tensors."""
    meta = {
        "config": asdict(model.config),
        "tokens": vocab.index_to_token[1:],
    }
    arrays = dict(model.state_arrays())
    arrays["meta"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    arrays["cluster_map"] = (
        model.cluster_map if model.cluster_map is not None
        else np.zeros(0, dtype=np.intp)
    )
    _write_deterministic_zip(path, arrays)


def load_checkpoint(path):
    """Rebuild (model, vocab) from a checkpoint; forward outputs match the
    saved model exactly."""
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode("utf-8"))
        config = ModelConfig(**meta["config"])
        vocab = Vocabulary.from_tokens(meta["tokens"])
        cluster_map = z["cluster_map"]
        if cluster_map.size == 0:
            cluster_map = None
        model = Model(
            config,
            Tensor(z["embedding"], requires_grad=config.train_embeddings),
            Tensor.param(z["conv_w"]),
            Tensor.param(z["conv_b"]),
            Tensor.param(z["hidden_w"]),
            Tensor.param(z["hidden_b"]),
            Tensor.param(z["out_w"]),
            Tensor.param(z["out_b"]),
            cluster_map,
        )
    return model, vocab
