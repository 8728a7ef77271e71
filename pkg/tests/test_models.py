import numpy as np
import pytest

from tiledsent.errors import ConfigError, InvalidInputError
from tiledsent.gmm import ClusterAssignment
from tiledsent.models import Model, ModelConfig, build_model, load_checkpoint, save_checkpoint
from tiledsent.text import Vocabulary, encode, tokenize
from tiledsent.word2vec import EmbeddingMatrix


def make_embeddings(rng, vocab_size=12, dim=6):
    vocab = Vocabulary.from_tokens([f"w{i}" for i in range(vocab_size)])
    vectors = np.vstack([np.zeros(dim), rng.normal(size=(vocab_size, dim))])
    return EmbeddingMatrix(vectors, vocab)


def make_assignment(vocab_size, k, rng):
    ids = (np.arange(vocab_size) % k) + 1
    resp = np.zeros((vocab_size, k))
    resp[np.arange(vocab_size), ids - 1] = 1.0
    return ClusterAssignment(ids, resp, k)


def random_sequences(rng, count, max_len, vocab_size):
    return rng.integers(1, vocab_size + 1, size=(count, max_len))


# -- configuration -----------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig("cnn", tile_size=3)
    with pytest.raises(ConfigError):
        ModelConfig("gru")
    with pytest.raises(ConfigError):
        ModelConfig("cnn", num_classes=3, output_activation="sigmoid")
    cfg = ModelConfig("cnn", num_classes=2)
    assert cfg.output_activation == "sigmoid" and cfg.output_units == 1
    cfg3 = ModelConfig("tcnn", tile_size=2, num_classes=3)
    assert cfg3.output_activation == "softmax" and cfg3.output_units == 3


def test_review_style_and_tweet_style_configs(rng):
    emb = make_embeddings(rng)
    review = ModelConfig("cnn", filter_size=2, num_classes=2, max_len=8,
                         conv_activation="relu", hidden_activation="tanh")
    assert (review.conv_activation, review.hidden_activation,
            review.output_activation) == ("relu", "tanh", "sigmoid")
    tweet = ModelConfig("htcnn", filter_size=2, tile_size=3, num_classes=3,
                        max_len=8, conv_activation="relu",
                        hidden_activation="relu")
    assert tweet.output_activation == "softmax" and tweet.tile_size == 3
    model = build_model(tweet, emb, make_assignment(12, 3, rng), seed=0)
    out = model.forward(random_sequences(rng, 1, 8, 12)[0])
    assert out.data.shape == (3,)


def test_hybrid_requires_assignment(rng):
    emb = make_embeddings(rng)
    with pytest.raises(ConfigError):
        build_model(ModelConfig("shtcnn", tile_size=2, max_len=8), emb)
    with pytest.raises(ConfigError):
        build_model(ModelConfig("cnn", max_len=8), emb,
                    make_assignment(12, 2, np.random.default_rng(0)))
    with pytest.raises(ConfigError):
        build_model(ModelConfig("htcnn", tile_size=3, max_len=8), emb,
                    make_assignment(12, 2, np.random.default_rng(0)))


# -- degenerate equivalences ---------------------------------------------------------


def _share_weights(src: Model, dst: Model):
    for name, arr in src.state_arrays().items():
        getattr(dst, name).data[...] = arr


def test_k1_architectures_match_cnn_bitwise(rng):
    emb = make_embeddings(rng)
    seqs = random_sequences(rng, 100, 8, 12)
    cnn = build_model(ModelConfig("cnn", filter_size=2, max_len=8,
                                  feature_maps=4, hidden_size=5), emb, seed=1)
    single_cluster = make_assignment(12, 1, rng)
    variants = [
        build_model(ModelConfig("tcnn", filter_size=2, tile_size=1, max_len=8,
                                feature_maps=4, hidden_size=5), emb, seed=2),
        build_model(ModelConfig("shtcnn", filter_size=2, tile_size=1, max_len=8,
                                feature_maps=4, hidden_size=5), emb,
                    single_cluster, seed=3),
        build_model(ModelConfig("htcnn", filter_size=2, tile_size=1, max_len=8,
                                feature_maps=4, hidden_size=5), emb,
                    single_cluster, seed=4),
    ]
    for variant in variants:
        _share_weights(cnn, variant)
        for seq in seqs:
            a = cnn.forward(seq).data
            b = variant.forward(seq).data
            assert np.array_equal(a, b), variant.config.architecture


def test_parameter_count_scales_with_tile_size(rng):
    emb = make_embeddings(rng)
    cnn = build_model(ModelConfig("cnn", filter_size=3, max_len=8,
                                  feature_maps=7), emb, seed=0)
    for k in (2, 3, 5):
        tcnn = build_model(ModelConfig("tcnn", filter_size=3, tile_size=k,
                                       max_len=8, feature_maps=7), emb, seed=0)
        assert tcnn.conv_parameter_count() == k * cnn.conv_parameter_count()


# -- forward behavior ------------------------------------------------------------------


def test_zero_output_layer_gives_uniform_softmax(rng):
    emb = make_embeddings(rng)
    cfg = ModelConfig("cnn", filter_size=2, max_len=8, num_classes=2,
                      output_activation="softmax")
    model = build_model(cfg, emb, seed=0)
    model.out_w.data[...] = 0.0
    model.out_b.data[...] = 0.0
    for seq in random_sequences(rng, 5, 8, 12):
        np.testing.assert_allclose(model.forward(seq).data, [0.5, 0.5])


def test_forward_outputs_are_probabilities(rng):
    emb = make_embeddings(rng)
    assignment = make_assignment(12, 2, rng)
    configs = [
        (ModelConfig("cnn", filter_size=2, max_len=8, num_classes=2), None),
        (ModelConfig("tcnn", filter_size=2, tile_size=2, max_len=8,
                     num_classes=3), None),
        (ModelConfig("shtcnn", filter_size=2, tile_size=2, max_len=8,
                     num_classes=3), assignment),
        (ModelConfig("htcnn", filter_size=2, tile_size=2, max_len=8,
                     num_classes=3), assignment),
    ]
    for cfg, asg in configs:
        model = build_model(cfg, make_embeddings(rng), asg, seed=5)
        for seq in random_sequences(rng, 100, 8, 12):
            out = model.forward(seq).data
            assert np.all(out >= 0.0) and np.all(out <= 1.0)
            if cfg.output_activation == "softmax":
                assert abs(out.sum() - 1.0) < 1e-9


def test_forward_length_mismatch(rng):
    emb = make_embeddings(rng)
    model = build_model(ModelConfig("cnn", filter_size=2, max_len=8), emb)
    with pytest.raises(InvalidInputError):
        model.forward(np.ones(5, dtype=np.intp))


def test_hand_set_filter_fires_on_its_word(rng):
    """A branch-1 filter tuned to 'choose' max-pools at the window where
    'choose' is the first word of the expanded cluster input."""
    tokens = tokenize("we choose to go to the moon")
    vocab = Vocabulary.from_tokens(tokens)
    dim = len(vocab)
    vectors = np.zeros((len(vocab) + 1, dim))
    for i in range(1, len(vocab) + 1):
        vectors[i, i - 1] = 1.0  # one-hot rows
    emb = EmbeddingMatrix(vectors, vocab)
    ids = np.array([2, 1, 2, 2, 2, 1])  # choose, moon -> cluster 1
    ids[vocab.index("choose") - 1] = 1
    ids[vocab.index("moon") - 1] = 1
    resp = np.zeros((len(vocab), 2))
    resp[np.arange(len(vocab)), ids - 1] = 1.0
    assignment = ClusterAssignment(ids, resp, 2)

    cfg = ModelConfig("htcnn", filter_size=2, tile_size=2, feature_maps=1,
                      max_len=7, conv_activation="identity")
    model = build_model(cfg, emb, assignment, seed=0)
    model.conv_w.data[...] = 0.0
    model.conv_w.data[0, 0, 0, :] = 10.0 * vectors[vocab.index("choose")]

    seq = encode(tokens, vocab, max_len=7)
    from tiledsent import nn
    from tiledsent.models import _slice_first
    from tiledsent.tiling import expand_neighbors, mask_by_cluster

    masked = expand_neighbors(mask_by_cluster(seq, assignment, 1), seq, 2)
    x = nn.embedding_lookup(model.embedding, masked.indices)
    fm = nn.conv1d(x, _slice_first(model.conv_w, 0),
                   _slice_first(model.conv_b, 0), act="identity")
    pooled = nn.global_max_pool(fm)
    assert pooled.pool_indices[0] == 1  # window (choose, to)


def test_feature_map_permutation_symmetry(rng):
    emb = make_embeddings(rng)
    model = build_model(ModelConfig("tcnn", filter_size=2, tile_size=2,
                                    max_len=8, feature_maps=6), emb, seed=8)
    seq = random_sequences(rng, 1, 8, 12)[0]
    before = model.forward(seq).data.copy()
    perm = np.random.default_rng(0).permutation(6)
    model.conv_w.data[...] = model.conv_w.data[:, perm]
    model.conv_b.data[...] = model.conv_b.data[:, perm]
    model.hidden_w.data[...] = model.hidden_w.data[:, perm]
    after = model.forward(seq).data
    np.testing.assert_allclose(before, after, atol=1e-12)


def test_gradient_reaches_every_parameter(rng):
    emb = make_embeddings(rng)
    assignment = make_assignment(12, 2, rng)
    for cfg, asg in [
        (ModelConfig("tcnn", filter_size=2, tile_size=2, max_len=8,
                     feature_maps=3, hidden_size=4), None),
        (ModelConfig("htcnn", filter_size=2, tile_size=2, max_len=8,
                     feature_maps=3, hidden_size=4), assignment),
    ]:
        model = build_model(cfg, make_embeddings(rng), asg, seed=11)
        for p in model.parameters():
            p.zero_grad()
        train_rng = np.random.default_rng(17)
        for seq in random_sequences(rng, 8, 8, 12):
            out = model.forward(seq, training=True, rng=train_rng)
            model.loss(out, 1).backward()
        for p in model.parameters():
            assert p.grad is not None and np.any(p.grad != 0), p.name


# -- predict ----------------------------------------------------------------------------


def test_predict_rules(rng):
    emb = make_embeddings(rng)
    softmax_model = build_model(
        ModelConfig("cnn", filter_size=2, max_len=8, num_classes=3), emb, seed=0
    )
    sigmoid_model = build_model(
        ModelConfig("cnn", filter_size=2, max_len=8, num_classes=2), emb, seed=0
    )
    seq = random_sequences(rng, 1, 8, 12)[0]

    class Fixed(Model):
        def __init__(self, base, values):
            self.__dict__.update(base.__dict__)
            self._values = np.asarray(values, dtype=np.float64)

        def forward(self, sequence, training=False, rng=None):
            from tiledsent.tensor import Tensor
            return Tensor.const(self._values)

    assert Fixed(softmax_model, [0.2, 0.7, 0.1]).predict(seq) == 1
    assert Fixed(softmax_model, [0.5, 0.5, 0.0]).predict(seq) == 0  # tie
    assert Fixed(sigmoid_model, [0.5]).predict(seq) == 1  # boundary rule
    assert Fixed(sigmoid_model, [0.49]).predict(seq) == 0


# -- checkpoints ---------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path, rng):
    emb = make_embeddings(rng)
    assignment = make_assignment(12, 2, rng)
    model = build_model(
        ModelConfig("htcnn", filter_size=2, tile_size=2, max_len=8,
                    num_classes=3), emb, assignment, seed=6,
    )
    path = tmp_path / "model.npz"
    save_checkpoint(model, emb.vocab, path)
    restored, vocab = load_checkpoint(path)
    assert vocab.index_to_token == emb.vocab.index_to_token
    assert restored.config == model.config
    for seq in random_sequences(rng, 10, 8, 12):
        np.testing.assert_allclose(
            restored.forward(seq).data, model.forward(seq).data, atol=1e-9
        )


def test_checkpoint_bytes_are_deterministic(tmp_path, rng):
    emb = make_embeddings(rng)
    model = build_model(ModelConfig("cnn", filter_size=2, max_len=8), emb, seed=3)
    a, b = tmp_path / "a.npz", tmp_path / "b.npz"
    save_checkpoint(model, emb.vocab, a)
    save_checkpoint(model, emb.vocab, b)
    assert a.read_bytes() == b.read_bytes()
