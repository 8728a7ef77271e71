"""Pure-NumPy kernel implementations.

These are the fallback for the compiled ``_fastops`` extension and define
the reference semantics: both backends must agree (up to float rounding)
on every function here. Arrays are float64 and C-contiguous; weight
layouts are ``(maps, width, dim)`` for plain convolution and
``(banks, maps, width, dim)`` for tiled convolution, where feature-map
position ``j`` (0-based) uses bank ``j % banks``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x, n, stride=1):
    d = x.shape[1]
    return sliding_window_view(x, (n, d))[::stride, 0].reshape(-1, n * d)


def conv_forward(x, w, b, stride=1):
    """x (m,d), w (F,n,d), b (F,) -> feature maps (F, L)."""
    F, n, _ = w.shape
    win = _windows(x, n, stride)
    return w.reshape(F, n * x.shape[1]) @ win.T + b[:, None]


def conv_backward(x, w, stride, gout):
    """Gradients of conv_forward: returns (gx, gw, gb)."""
    m, d = x.shape
    F, n, _ = w.shape
    L = gout.shape[1]
    win = _windows(x, n, stride)
    gw = (gout @ win).reshape(F, n, d)
    gb = gout.sum(axis=1)
    gwin = (gout.T @ w.reshape(F, n * d)).reshape(L, n, d)
    gx = np.zeros_like(x)
    for t in range(n):
        gx[t : t + stride * (L - 1) + 1 : stride] += gwin[:, t]
    return gx, gw, gb


def tiled_conv_forward(x, w, b):
    """x (m,d), w (k,F,n,d), b (k,F) -> feature maps (F, m-n+1)."""
    k, F, n, d = w.shape
    L = x.shape[0] - n + 1
    win = _windows(x, n)
    out = np.empty((F, L))
    for bank in range(k):
        cols = slice(bank, L, k)
        out[:, cols] = w[bank].reshape(F, n * d) @ win[cols].T + b[bank][:, None]
    return out


def tiled_conv_backward(x, w, gout):
    """Gradients of tiled_conv_forward: returns (gx, gw, gb)."""
    k, F, n, d = w.shape
    L = gout.shape[1]
    win = _windows(x, n)
    gw = np.zeros_like(w)
    gb = np.zeros((k, F))
    gwin = np.zeros((L, n * d))
    for bank in range(k):
        cols = slice(bank, L, k)
        gslice = gout[:, cols]
        gw[bank] = (gslice @ win[cols]).reshape(F, n, d)
        gb[bank] = gslice.sum(axis=1)
        gwin[cols] = gslice.T @ w[bank].reshape(F, n * d)
    gx = np.zeros_like(x)
    g3 = gwin.reshape(L, n, d)
    for t in range(n):
        gx[t : t + L] += g3[:, t]
    return gx, gw, gb


def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def _softplus(z):
    # log(1 + e^z), stable for large |z|
    if z > 0.0:
        return z + np.log1p(np.exp(-z))
    return np.log1p(np.exp(z))


def sg_train(win, wout, centers, targets, lr):
    """One skip-gram negative-sampling pass over prepared pairs.

    centers (P,), targets (P, 1+negatives) with the true context word in
    column 0. Updates win/wout in place, returns the summed loss.
    Negatives that collide with the true context word are skipped.
    """
    loss = 0.0
    P, T = targets.shape
    for p in range(P):
        c = centers[p]
        pos = targets[p, 0]
        h = win[c].copy()
        neu1e = np.zeros_like(h)
        for j in range(T):
            t = targets[p, j]
            if j > 0 and t == pos:
                continue
            label = 1.0 if j == 0 else 0.0
            z = float(np.dot(h, wout[t]))
            loss += _softplus(-z) if j == 0 else _softplus(z)
            gscale = _sigmoid(z) - label
            neu1e += gscale * wout[t]
            wout[t] -= (lr * gscale) * h
        win[c] -= lr * neu1e
    return loss


def cbow_train(win, wout, ctx_flat, ctx_offsets, targets, lr):
    """One CBOW negative-sampling pass over prepared examples.

    Example p averages input rows ctx_flat[ctx_offsets[p]:ctx_offsets[p+1]];
    targets (P, 1+negatives) holds the true center word in column 0.
    """
    loss = 0.0
    P, T = targets.shape
    for p in range(P):
        lo, hi = int(ctx_offsets[p]), int(ctx_offsets[p + 1])
        cnt = hi - lo
        if cnt == 0:
            continue
        ctx = ctx_flat[lo:hi]
        h = win[ctx].mean(axis=0)
        pos = targets[p, 0]
        neu1e = np.zeros_like(h)
        for j in range(T):
            t = targets[p, j]
            if j > 0 and t == pos:
                continue
            label = 1.0 if j == 0 else 0.0
            z = float(np.dot(h, wout[t]))
            loss += _softplus(-z) if j == 0 else _softplus(z)
            gscale = _sigmoid(z) - label
            neu1e += gscale * wout[t]
            wout[t] -= (lr * gscale) * h
        upd = (lr / cnt) * neu1e
        for i in range(lo, hi):
            win[ctx_flat[i]] -= upd
    return loss
