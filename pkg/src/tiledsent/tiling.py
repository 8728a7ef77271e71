"""Tiled-convolution planning, cluster masking, and neighbor expansion.

A tiling plan assigns filter ids cyclically to consecutive window starts:
1-based start ``s`` uses filter ``((s - 1) mod k) + 1``, so each filter's
starts form the arithmetic sequence i, i+k, i+2k, ... Enumeration by
``build_tiling_plan`` is the normative definition of which windows each
filter covers; ``slide_bound_formula`` is the closed-form slide bound kept
for comparison, and ``tiling_compliance`` tabulates where the two agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .text import EncodedSequence

_NP_ACTIVATIONS = {
    "identity": lambda a: a,
    "relu": lambda a: np.maximum(a, 0.0),
    "tanh": np.tanh,
    "sigmoid": lambda a: 1.0 / (1.0 + np.exp(-a)),
}


@dataclass
class FilterSlice:
    """Input span (1-based, inclusive words) covered by one filter."""

    filter_id: int
    starts: list
    first_word: int | None
    last_word: int | None
    stride: int


@dataclass
class TilingPlan:
    """Cyclic filter-to-window assignment for (seq_len, filter_size, tile_size)."""

    seq_len: int
    filter_size: int
    tile_size: int
    window_starts: list = field(default_factory=list)   # [(start, filter_id)]
    filter_slices: dict = field(default_factory=dict)   # filter_id -> FilterSlice

    @property
    def num_windows(self) -> int:
        return self.seq_len - self.filter_size + 1

    def starts_of(self, filter_id: int):
        return self.filter_slices[filter_id].starts


def build_tiling_plan(m: int, n: int, k: int) -> TilingPlan:
    """Enumerate every window start with its cyclically assigned filter."""
    if n < 1 or k < 1:
        raise InvalidInputError("filter size and tile size must be positive")
    if m < n:
        raise InvalidInputError(f"sequence length {m} shorter than filter size {n}")
    window_starts = [(s, ((s - 1) % k) + 1) for s in range(1, m - n + 2)]
    slices = {}
    for i in range(1, k + 1):
        starts = [s for s, f in window_starts if f == i]
        slices[i] = FilterSlice(
            filter_id=i,
            starts=starts,
            first_word=starts[0] if starts else None,
            last_word=starts[-1] + n - 1 if starts else None,
            stride=k,
        )
    return TilingPlan(m, n, k, window_starts, slices)


def slide_bound_formula(m: int, n: int, k: int, i: int) -> int:
    """Closed-form slide bound for filter i, evaluated in exact integer
    arithmetic: floor(m / (k+n-1)) * (k+n-1) + phi_i, where phi_i is
    n+i-2 when frac(m / (k+n-1)) >= i/k and i-k otherwise."""
    if not 1 <= i <= k:
        raise InvalidInputError(f"filter id {i} out of range 1..{k}")
    period = k + n - 1
    base = (m // period) * period
    rem = m % period
    if rem * k >= i * period:
        phi = n + i - 2
    else:
        phi = i - k
    return base + phi


def tiling_compliance(m_values, n_values, k_values):
    """Compare the closed-form bound against enumeration over a grid.

    Returns one row per (m, n, k, filter): the formula value, the
    enumerated last window start and last covered word, and whether the
    formula matches either reading. Enumeration is normative for all
    slicing; this table only documents where the formula diverges.
    """
    rows = []
    for m in m_values:
        for n in n_values:
            if m < n:
                continue
            for k in k_values:
                plan = build_tiling_plan(m, n, k)
                for i in range(1, k + 1):
                    value = slide_bound_formula(m, n, k, i)
                    fs = plan.filter_slices[i]
                    last_start = fs.starts[-1] if fs.starts else None
                    rows.append(
                        {
                            "m": m,
                            "n": n,
                            "k": k,
                            "filter": i,
                            "formula": value,
                            "last_start": last_start,
                            "last_word": fs.last_word,
                            "matches_last_start": value == last_start,
                            "matches_last_word": value == fs.last_word,
                        }
                    )
    return rows


def format_compliance_table(rows) -> str:
    header = (
        f"{'m':>3} {'n':>2} {'k':>2} {'filter':>6} {'formula':>8} "
        f"{'last_start':>10} {'last_word':>9}  agreement"
    )
    lines = [header, "-" * len(header)]
    agree_start = agree_word = 0
    for r in rows:
        if r["matches_last_start"]:
            tag = "last-start"
            agree_start += 1
        elif r["matches_last_word"]:
            tag = "last-word"
            agree_word += 1
        else:
            tag = "NEITHER"
        lines.append(
            f"{r['m']:>3} {r['n']:>2} {r['k']:>2} {r['filter']:>6} "
            f"{r['formula']:>8} {str(r['last_start']):>10} "
            f"{str(r['last_word']):>9}  {tag}"
        )
    neither = len(rows) - agree_start - agree_word
    lines.append(
        f"total {len(rows)}: {agree_start} match last-start, "
        f"{agree_word} match last-word only, {neither} match neither"
    )
    return "\n".join(lines)


# -- tiled convolution (array level) ------------------------------------------


def tiled_conv_forward(x, filters, biases, act="identity"):
    """Direct tiled convolution: x (m,d), filters (k,F,n,d), biases (k,F)
    -> feature maps (F, m-n+1); position j (0-based) uses bank j % k."""
    x = np.asarray(x, dtype=np.float64)
    filters = np.asarray(filters, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    if x.shape[0] < filters.shape[2]:
        raise InvalidInputError("sequence shorter than filter size")
    try:
        fn = _NP_ACTIVATIONS[act]
    except KeyError:
        raise InvalidInputError(f"unknown activation {act!r}") from None
    return fn(kernels.tiled_conv_forward(x, filters, biases))


def simultaneous_conv_construction(x, filters, biases, act="identity"):
    """Tiled convolution re-expressed as k simultaneous strided convolutions.

    Layer i runs a stride-k convolution over the input slice that begins
    at word i and ends at the filter's last covered word (enumerated, not
    the closed form). Each layer is max-pooled, the pooled results are
    concatenated, and one more pooling reduces them to one value per
    feature map. Returns the (F,) pooled features, which equal the global
    max over ``tiled_conv_forward``'s output.
    """
    x = np.asarray(x, dtype=np.float64)
    filters = np.asarray(filters, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    k, F, n, d = filters.shape
    try:
        fn = _NP_ACTIVATIONS[act]
    except KeyError:
        raise InvalidInputError(f"unknown activation {act!r}") from None
    plan = build_tiling_plan(x.shape[0], n, k)
    first_stage = []
    for i in range(1, k + 1):
        fs = plan.filter_slices[i]
        if not fs.starts:
            continue
        sub = x[fs.first_word - 1 : fs.last_word]
        count = (sub.shape[0] - n) // k + 1
        vals = np.empty((F, count))
        for j in range(count):
            window = sub[j * k : j * k + n]
            vals[:, j] = (
                np.tensordot(filters[i - 1], window, axes=([1, 2], [0, 1]))
                + biases[i - 1]
            )
        first_stage.append(fn(vals).max(axis=1))
    concatenated = np.stack(first_stage, axis=0)
    return concatenated.max(axis=0)


# -- cluster masking -----------------------------------------------------------


@dataclass
class MaskedSequence:
    """A sequence with out-of-cluster positions replaced by PAD (index 0).

    ``core_mask`` marks the positions whose word belongs to the cluster;
    neighbor expansion always works from this mask, so expanding twice
    gives the same result as expanding once.
    """

    cluster_id: int
    indices: np.ndarray
    core_mask: np.ndarray
    expanded: bool = False

    def to_text(self, vocab) -> str:
        return " ".join(vocab.token(int(i)) for i in self.indices)


def _indices_of(sequence):
    if isinstance(sequence, (EncodedSequence, MaskedSequence)):
        return np.asarray(sequence.indices, dtype=np.intp)
    return np.asarray(sequence, dtype=np.intp)


def _cluster_map(assignment):
    if hasattr(assignment, "index_map"):
        return assignment.index_map()
    return np.asarray(assignment, dtype=np.intp)


def mask_by_cluster(sequence, assignment, cluster_id: int) -> MaskedSequence:
    """Keep the cluster's words, replace every other position with PAD.

    ``assignment`` is a ClusterAssignment or a precomputed array mapping
    vocabulary index -> cluster id (with PAD mapped to 0).
    """
    idx = _indices_of(sequence)
    cmap = _cluster_map(assignment)
    core = cmap[idx] == cluster_id
    return MaskedSequence(
        cluster_id=cluster_id,
        indices=np.where(core, idx, 0).astype(np.intp),
        core_mask=core,
    )


def expand_neighbors(masked: MaskedSequence, original, n: int) -> MaskedSequence:
    """Restore the n-1 neighbors on each side of every in-cluster word.

    Neighbors are the original words (possibly from other clusters);
    positions that were PAD in the original stay PAD. Boundaries clip.
    """
    if n < 1:
        raise InvalidInputError("filter size must be positive")
    orig = _indices_of(original)
    if orig.shape != masked.indices.shape:
        raise InvalidInputError("masked and original sequences differ in length")
    core = masked.core_mask
    keep = core.copy()
    for off in range(1, n):
        keep[:-off] |= core[off:]
        keep[off:] |= core[:-off]
    return MaskedSequence(
        cluster_id=masked.cluster_id,
        indices=np.where(keep & (orig != 0), orig, 0).astype(np.intp),
        core_mask=core.copy(),
        expanded=True,
    )


def cluster_inputs(sequence, assignment, k: int, n: int, expand: bool):
    """All k per-cluster inputs for a sequence (expand=True adds neighbors)."""
    out = []
    for cid in range(1, k + 1):
        ms = mask_by_cluster(sequence, assignment, cid)
        if expand:
            ms = expand_neighbors(ms, sequence, n)
        out.append(ms)
    return out
