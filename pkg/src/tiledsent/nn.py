"""Neural-network layers as graph operations on :class:`~tiledsent.tensor.Tensor`.

Embedding lookup, plain and tiled 1-D convolution, global max-pooling,
dense layers, dropout, and the two loss functions. Convolutions run on
the active kernel backend (compiled or NumPy).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import InvalidInputError, NumericError
from .tensor import Tensor, stack

PROB_EPS = 1e-7  # probabilities clamped to [PROB_EPS, 1 - PROB_EPS] before log

ACTIVATIONS = {
    "identity": lambda t: t,
    "relu": lambda t: t.relu(),
    "tanh": lambda t: t.tanh(),
    "sigmoid": lambda t: t.sigmoid(),
    "softmax": lambda t: t.softmax(),
}


def activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}"
        ) from None


def uniform_init(rng, shape, scale=0.05):
    """Small uniform weights in [-scale, scale]."""
    return rng.uniform(-scale, scale, size=shape)


def _check_finite(arr, what):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {what}")


def embedding_lookup(matrix: Tensor, indices) -> Tensor:
    """Gather rows of a (V+1, d) embedding matrix; row 0 is the PAD row.

    The PAD row's gradient is masked so it stays exactly zero under
    training.
    """
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise InvalidInputError("embedding_lookup expects a 1-D index sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= matrix.data.shape[0]):
        raise InvalidInputError("token index out of vocabulary range")
    out_data = matrix.data[idx]

    def back(g):
        if matrix.requires_grad:
            buf = np.zeros_like(matrix.data)
            np.add.at(buf, idx, g)
            buf[0] = 0.0
            matrix.accumulate_grad(buf)

    return Tensor(out_data, matrix.requires_grad, (matrix,), back)


def conv1d(x: Tensor, weights: Tensor, bias: Tensor, stride=1, act="identity") -> Tensor:
    """Convolution over all word windows: (m,d) x (F,n,d) -> (F, L).

    A 2-D ``weights`` (n,d) with scalar bias yields a single feature map
    of shape (L,). ``L = (m - n) // stride + 1``.
    """
    f = activation(act)
    single = weights.data.ndim == 2
    w = weights.data[None, :] if single else weights.data
    b = np.atleast_1d(bias.data).reshape(-1)
    m, d = x.data.shape
    F, n, dw = w.shape
    if dw != d:
        raise InvalidInputError(f"filter dim {dw} does not match input dim {d}")
    if m < n:
        raise InvalidInputError(f"input length {m} shorter than filter size {n}")
    if stride < 1:
        raise InvalidInputError("stride must be >= 1")
    if b.shape[0] != F:
        raise InvalidInputError("bias length does not match feature-map count")
    _check_finite(w, "convolution weights")
    _check_finite(x.data, "convolution input")
    out_data = kernels.conv_forward(x.data, w, b, stride)

    def back(g):
        gx, gw, gb = kernels.conv_backward(x.data, w, stride, g)
        if x.requires_grad:
            x.accumulate_grad(gx)
        if weights.requires_grad:
            weights.accumulate_grad(gw[0] if single else gw)
        if bias.requires_grad:
            bias.accumulate_grad(gb.reshape(bias.data.shape))

    req = x.requires_grad or weights.requires_grad or bias.requires_grad
    out = Tensor(out_data[0] if single else out_data, req, (x, weights, bias), back)
    if single:
        # re-wire: gradient arriving as (L,) must reach the kernel as (1, L)
        out._backward = lambda g: back(g[None, :])
    return f(out)


def tiled_conv1d(x: Tensor, weights: Tensor, bias: Tensor, act="identity") -> Tensor:
    """Tiled convolution: position j of every map uses filter bank j % k.

    weights (k, F, n, d), bias (k, F) -> (F, m-n+1). With k = 1 this is
    exactly ``conv1d`` at stride 1 (same kernel code path).
    """
    f = activation(act)
    w = weights.data
    if w.ndim != 4:
        raise InvalidInputError("tiled weights must have shape (banks, maps, n, d)")
    k, F, n, d = w.shape
    m, dx = x.data.shape
    if dx != d:
        raise InvalidInputError(f"filter dim {d} does not match input dim {dx}")
    if m < n:
        raise InvalidInputError(f"input length {m} shorter than filter size {n}")
    if bias.data.shape != (k, F):
        raise InvalidInputError("tiled bias must have shape (banks, maps)")
    _check_finite(w, "convolution weights")
    _check_finite(x.data, "convolution input")
    out_data = kernels.tiled_conv_forward(x.data, w, bias.data)

    def back(g):
        gx, gw, gb = kernels.tiled_conv_backward(x.data, w, g)
        if x.requires_grad:
            x.accumulate_grad(gx)
        if weights.requires_grad:
            weights.accumulate_grad(gw)
        if bias.requires_grad:
            bias.accumulate_grad(gb)

    req = x.requires_grad or weights.requires_grad or bias.requires_grad
    return f(Tensor(out_data, req, (x, weights, bias), back))


def global_max_pool(feature_map: Tensor) -> Tensor:
    """Keep the single largest value of each feature map.

    (L,) -> scalar, (F, L) -> (F,). Ties break to the lowest position;
    the winning positions are exposed as ``out.pool_indices``. The
    gradient flows to exactly one position per map.
    """
    data = feature_map.data
    if data.size == 0:
        raise InvalidInputError("global_max_pool on an empty feature map")
    if data.ndim == 1:
        idx = int(np.argmax(data))

        def back(g):
            if feature_map.requires_grad:
                buf = np.zeros_like(data)
                buf[idx] = float(g)
                feature_map.accumulate_grad(buf)

        out = Tensor(data[idx], feature_map.requires_grad, (feature_map,), back)
    elif data.ndim == 2:
        idx = np.argmax(data, axis=1)

        def back(g):
            if feature_map.requires_grad:
                buf = np.zeros_like(data)
                buf[np.arange(data.shape[0]), idx] = g
                feature_map.accumulate_grad(buf)

        rows = np.arange(data.shape[0])
        out = Tensor(data[rows, idx], feature_map.requires_grad, (feature_map,), back)
    else:
        raise InvalidInputError("global_max_pool expects a 1-D or 2-D feature map")
    out.name = "global_max_pool"
    out.pool_indices = idx
    return out


def branch_max(pooled) -> Tensor:
    """Elementwise max over per-branch pooled vectors (second pooling stage)."""
    return stack(pooled).max(axis=0)


def dense(x: Tensor, weights: Tensor, bias: Tensor, act="identity") -> Tensor:
    """Affine map plus activation: f(W @ x + b)."""
    f = activation(act)
    if weights.data.ndim != 2 or weights.data.shape[1] != x.data.shape[0]:
        raise InvalidInputError(
            f"dense weight shape {weights.data.shape} does not accept "
            f"input of length {x.data.shape}"
        )
    if bias.data.shape != (weights.data.shape[0],):
        raise InvalidInputError("dense bias length mismatch")
    return f(weights.matvec(x) + bias)


def dropout(x: Tensor, rate: float, rng, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate == 0."""
    if not training or rate <= 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise InvalidInputError("dropout rate must be in [0, 1)")
    keep = 1.0 - rate
    mask = (rng.random(x.data.shape) < keep) / keep
    return x * Tensor.const(mask)


def binary_cross_entropy(pred: Tensor, label, weight=1.0) -> Tensor:
    """-[y log p + (1-y) log(1-p)], optionally class-weighted.

    The probability is clamped away from {0, 1} so the loss is always
    finite.
    """
    if pred.data.size != 1:
        raise InvalidInputError("binary_cross_entropy expects a single probability")
    y = int(label)
    if y not in (0, 1):
        raise InvalidInputError(f"binary label must be 0 or 1, got {label}")
    p = pred.clamp(PROB_EPS, 1.0 - PROB_EPS)
    loss = -(p.log() * float(y) + (1.0 - p).log() * float(1 - y))
    return loss * float(weight)


def weighted_categorical_cross_entropy(pred: Tensor, label, class_weights) -> Tensor:
    """-weight[label] * log pred[label] for a probability vector."""
    wvec = np.asarray(class_weights, dtype=np.float64)
    if pred.data.ndim != 1:
        raise InvalidInputError("expected a probability vector")
    c = pred.data.shape[0]
    if wvec.shape != (c,):
        raise InvalidInputError("class_weights length must match class count")
    if np.any(wvec < 0):
        raise InvalidInputError("class weights must be non-negative")
    if not 0 <= int(label) < c:
        raise InvalidInputError(f"label {label} out of range for {c} classes")
    if abs(pred.data.sum() - 1.0) > 1e-6:
        raise InvalidInputError("prediction vector must sum to 1")
    p = pred.pick(int(label)).clamp(PROB_EPS, 1.0 - PROB_EPS)
    return p.log() * (-float(wvec[int(label)]))
