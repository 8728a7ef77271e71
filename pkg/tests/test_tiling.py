import numpy as np
import pytest

from tiledsent import kernels
from tiledsent.errors import InvalidInputError
from tiledsent.text import Vocabulary, encode, tokenize
from tiledsent.tiling import (
    build_tiling_plan,
    cluster_inputs,
    expand_neighbors,
    format_compliance_table,
    mask_by_cluster,
    simultaneous_conv_construction,
    slide_bound_formula,
    tiled_conv_forward,
    tiling_compliance,
)

MOON = "we choose to go to the moon"


@pytest.fixture
def moon_setup():
    tokens = tokenize(MOON)
    vocab = Vocabulary.from_tokens(tokens)
    seq = encode(tokens, vocab, max_len=len(tokens))
    # cluster 1: {choose, moon}; cluster 2: the rest
    cluster_map = np.zeros(len(vocab) + 1, dtype=np.intp)
    for tok in ("choose", "moon"):
        cluster_map[vocab.index(tok)] = 1
    for tok in ("we", "to", "go", "the"):
        cluster_map[vocab.index(tok)] = 2
    return vocab, seq, cluster_map


# -- plans ------------------------------------------------------------------------


def test_plan_alternates_filters_with_period_two():
    plan = build_tiling_plan(7, 2, 2)
    assert plan.starts_of(1) == [1, 3, 5]
    assert plan.starts_of(2) == [2, 4, 6]


def test_plan_boundary_each_filter_one_window():
    plan = build_tiling_plan(5, 3, 3)
    for i in (1, 2, 3):
        assert len(plan.starts_of(i)) == 1


def test_plan_last_starts_for_m9():
    plan = build_tiling_plan(9, 2, 2)
    assert plan.starts_of(1)[-1] == 7
    assert plan.starts_of(2)[-1] == 8


def test_plan_rejects_short_sequences():
    with pytest.raises(InvalidInputError):
        build_tiling_plan(2, 3, 1)


@pytest.mark.parametrize("m", range(4, 15))
@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_plan_partitions_starts_and_covers_all_words(m, n, k):
    if m < n:
        pytest.skip("no windows")
    plan = build_tiling_plan(m, n, k)
    all_starts = sorted(s for i in range(1, k + 1) for s in plan.starts_of(i))
    assert all_starts == list(range(1, m - n + 2))
    covered = set()
    for s, _ in plan.window_starts:
        covered.update(range(s, s + n))
    assert covered == set(range(1, m + 1))
    # consecutive starts get cyclically consecutive filter ids
    for s, f in plan.window_starts:
        assert f == ((s - 1) % k) + 1


# -- the closed-form slide bound -----------------------------------------------------


def test_slide_bound_reference_values():
    assert slide_bound_formula(7, 2, 2, 1) == 5
    assert slide_bound_formula(7, 2, 2, 2) == 6
    assert slide_bound_formula(8, 2, 2, 1) == 7
    with pytest.raises(InvalidInputError):
        slide_bound_formula(7, 2, 2, 3)


def test_compliance_table_flags_known_divergences():
    rows = tiling_compliance(range(5, 31), [2, 3, 4], [2, 3, 4, 5])
    by_key = {(r["m"], r["n"], r["k"], r["filter"]): r for r in rows}
    # the bigram case the diagrams pin down: formula equals the last starts
    assert by_key[(7, 2, 2, 1)]["formula"] == 5
    assert by_key[(7, 2, 2, 2)]["formula"] == 6
    assert by_key[(7, 2, 2, 1)]["matches_last_start"]
    assert by_key[(7, 2, 2, 2)]["matches_last_start"]
    # known divergent cases: neither reading of the bound matches enumeration
    bad = by_key[(7, 3, 2, 1)]
    assert not bad["matches_last_start"] and not bad["matches_last_word"]
    # and (9,2,2) matches the last-word reading but not last-start
    m9 = by_key[(9, 2, 2, 1)]
    assert m9["matches_last_word"] and not m9["matches_last_start"]
    table = format_compliance_table(rows)
    assert "NEITHER" in table and "total" in table


# -- tiled convolution ----------------------------------------------------------------


def test_tiled_k1_equals_plain_convolution(rng):
    x = rng.normal(size=(9, 4))
    w = rng.normal(size=(1, 3, 2, 4))
    b = rng.normal(size=(1, 3))
    tiled = tiled_conv_forward(x, w, b)
    plain = kernels.conv_forward(x, w[0], b[0], 1)
    assert np.array_equal(tiled, plain)


def test_tiled_zero_bank_zeroes_its_positions(rng):
    x = rng.normal(size=(8, 3)) + 5.0
    w = np.zeros((2, 2, 2, 3))
    w[1] = rng.normal(size=(2, 2, 3)) + 1.0
    b = np.zeros((2, 2))
    out = tiled_conv_forward(x, w, b)
    # bank 1 handles 1-based odd positions (0-based even columns)
    np.testing.assert_array_equal(out[:, 0::2], 0.0)
    assert np.all(out[:, 1::2] != 0.0)


@pytest.mark.parametrize("case", range(50))
def test_construction_equivalence_random(case):
    gen = np.random.default_rng(900 + case)
    n = int(gen.integers(2, 5))
    k = int(gen.integers(1, 4))
    m = int(gen.integers(n, 13))
    d, F = int(gen.integers(1, 4)), int(gen.integers(1, 4))
    x = gen.normal(size=(m, d))
    w = gen.normal(size=(k, F, n, d))
    b = gen.normal(size=(k, F))
    act = ["identity", "relu", "tanh"][case % 3]
    direct = tiled_conv_forward(x, w, b, act=act).max(axis=1)
    construction = simultaneous_conv_construction(x, w, b, act=act)
    np.testing.assert_allclose(direct, construction, atol=1e-9)


def test_construction_figure_pattern_for_bigrams(rng):
    # m=7, n=2, k=2: layer 1 covers starts 1,3,5 and layer 2 covers 2,4,6
    plan = build_tiling_plan(7, 2, 2)
    x = rng.normal(size=(7, 3))
    w = rng.normal(size=(2, 1, 2, 3))
    b = np.zeros((2, 1))
    fm = tiled_conv_forward(x, w, b)
    for i, bank in ((1, 0), (2, 1)):
        for s in plan.starts_of(i):
            window = x[s - 1 : s + 1]
            expected = np.sum(w[bank, 0] * window)
            np.testing.assert_allclose(fm[0, s - 1], expected, atol=1e-12)


# -- masking and neighbor expansion -----------------------------------------------------


def test_mask_by_cluster_reproduces_worked_example(moon_setup):
    vocab, seq, cluster_map = moon_setup
    first = mask_by_cluster(seq, cluster_map, 1)
    second = mask_by_cluster(seq, cluster_map, 2)
    assert first.to_text(vocab) == "PAD choose PAD PAD PAD PAD moon"
    assert second.to_text(vocab) == "we PAD to go to the PAD"


def test_expand_neighbors_reproduces_worked_example(moon_setup):
    vocab, seq, cluster_map = moon_setup
    first = expand_neighbors(mask_by_cluster(seq, cluster_map, 1), seq, n=2)
    second = expand_neighbors(mask_by_cluster(seq, cluster_map, 2), seq, n=2)
    assert first.to_text(vocab) == "we choose to PAD PAD the moon"
    assert second.to_text(vocab) == "we choose to go to the moon"


def test_expand_neighbors_n3_restores_two_each_side(moon_setup):
    vocab, seq, cluster_map = moon_setup
    first = expand_neighbors(mask_by_cluster(seq, cluster_map, 1), seq, n=3)
    assert first.to_text(vocab) == MOON


def test_mask_with_absent_cluster_is_all_pad(moon_setup):
    vocab, seq, cluster_map = moon_setup
    ms = mask_by_cluster(seq, cluster_map, 9)
    assert ms.to_text(vocab) == " ".join(["PAD"] * 7)
    expanded = expand_neighbors(ms, seq, n=2)
    assert expanded.to_text(vocab) == ms.to_text(vocab)


def test_masking_idempotent_and_expansion_monotone_idempotent(moon_setup):
    vocab, seq, cluster_map = moon_setup
    ms = mask_by_cluster(seq, cluster_map, 2)
    twice = mask_by_cluster(ms, cluster_map, 2)
    np.testing.assert_array_equal(ms.indices, twice.indices)
    expanded = expand_neighbors(ms, seq, n=2)
    again = expand_neighbors(expanded, seq, n=2)
    np.testing.assert_array_equal(expanded.indices, again.indices)
    # monotone: expansion never removes a word
    assert np.all((ms.indices == 0) | (expanded.indices == ms.indices))


def test_expansion_does_not_restore_original_padding(moon_setup):
    vocab, _, cluster_map = moon_setup
    tokens = tokenize(MOON)
    padded = encode(tokens, vocab, max_len=10)  # trailing PAD positions
    ms = mask_by_cluster(padded, cluster_map, 1)
    expanded = expand_neighbors(ms, padded, n=4)
    np.testing.assert_array_equal(expanded.indices[7:], 0)


def test_union_of_hybrid_inputs_restores_every_word(rng, moon_setup):
    vocab, seq, cluster_map = moon_setup
    inputs = cluster_inputs(seq, cluster_map, k=2, n=2, expand=True)
    union_nonpad = np.zeros(len(seq.indices), dtype=bool)
    for ms in inputs:
        union_nonpad |= ms.indices != 0
    np.testing.assert_array_equal(union_nonpad, seq.indices != 0)
