# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-loop kernels: 1-D (tiled) convolution and word2vec updates.

Semantics match tiledsent._pyops exactly; see that module for the layout
conventions. Selected automatically at import by tiledsent.kernels.
"""

import numpy as np

from libc.math cimport exp, log1p


def conv_forward(double[:, ::1] x, double[:, :, ::1] w, double[::1] b, Py_ssize_t stride=1):
    cdef Py_ssize_t m = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t F = w.shape[0], n = w.shape[1]
    cdef Py_ssize_t L = (m - n) // stride + 1
    out_arr = np.empty((F, L), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t f, j, t, e, s
    cdef double acc
    for f in range(F):
        for j in range(L):
            s = j * stride
            acc = b[f]
            for t in range(n):
                for e in range(d):
                    acc += w[f, t, e] * x[s + t, e]
            out[f, j] = acc
    return out_arr


def conv_backward(double[:, ::1] x, double[:, :, ::1] w, Py_ssize_t stride,
                  double[:, ::1] gout):
    cdef Py_ssize_t m = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t F = w.shape[0], n = w.shape[1]
    cdef Py_ssize_t L = gout.shape[1]
    gx_arr = np.zeros((m, d), dtype=np.float64)
    gw_arr = np.zeros((F, n, d), dtype=np.float64)
    gb_arr = np.zeros(F, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t f, j, t, e, s
    cdef double g
    for f in range(F):
        for j in range(L):
            g = gout[f, j]
            s = j * stride
            gb[f] += g
            for t in range(n):
                for e in range(d):
                    gw[f, t, e] += g * x[s + t, e]
                    gx[s + t, e] += g * w[f, t, e]
    return gx_arr, gw_arr, gb_arr


def tiled_conv_forward(double[:, ::1] x, double[:, :, :, ::1] w, double[:, ::1] b):
    cdef Py_ssize_t m = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t k = w.shape[0], F = w.shape[1], n = w.shape[2]
    cdef Py_ssize_t L = m - n + 1
    out_arr = np.empty((F, L), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t f, j, t, e, bank
    cdef double acc
    for f in range(F):
        for j in range(L):
            bank = j % k
            acc = b[bank, f]
            for t in range(n):
                for e in range(d):
                    acc += w[bank, f, t, e] * x[j + t, e]
            out[f, j] = acc
    return out_arr


def tiled_conv_backward(double[:, ::1] x, double[:, :, :, ::1] w, double[:, ::1] gout):
    cdef Py_ssize_t m = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t k = w.shape[0], F = w.shape[1], n = w.shape[2]
    cdef Py_ssize_t L = gout.shape[1]
    gx_arr = np.zeros((m, d), dtype=np.float64)
    gw_arr = np.zeros((k, F, n, d), dtype=np.float64)
    gb_arr = np.zeros((k, F), dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[:, ::1] gb = gb_arr
    cdef Py_ssize_t f, j, t, e, bank
    cdef double g
    for f in range(F):
        for j in range(L):
            bank = j % k
            g = gout[f, j]
            gb[bank, f] += g
            for t in range(n):
                for e in range(d):
                    gw[bank, f, t, e] += g * x[j + t, e]
                    gx[j + t, e] += g * w[bank, f, t, e]
    return gx_arr, gw_arr, gb_arr


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _softplus(double z) nogil:
    if z > 0.0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


def sg_train(double[:, ::1] win, double[:, ::1] wout,
             Py_ssize_t[::1] centers, Py_ssize_t[:, ::1] targets, double lr):
    cdef Py_ssize_t P = targets.shape[0], T = targets.shape[1], d = win.shape[1]
    cdef Py_ssize_t p, j, e, c, t, pos
    cdef double z, gscale, label, loss = 0.0
    work_arr = np.zeros(2 * d, dtype=np.float64)
    cdef double[::1] work = work_arr
    # work[:d] = copy of the center row, work[d:] = accumulated input grad
    for p in range(P):
        c = centers[p]
        pos = targets[p, 0]
        for e in range(d):
            work[e] = win[c, e]
            work[d + e] = 0.0
        for j in range(T):
            t = targets[p, j]
            if j > 0 and t == pos:
                continue
            label = 1.0 if j == 0 else 0.0
            z = 0.0
            for e in range(d):
                z += work[e] * wout[t, e]
            loss += _softplus(-z) if j == 0 else _softplus(z)
            gscale = _sigmoid(z) - label
            for e in range(d):
                work[d + e] += gscale * wout[t, e]
                wout[t, e] -= (lr * gscale) * work[e]
        for e in range(d):
            win[c, e] -= lr * work[d + e]
    return loss


def cbow_train(double[:, ::1] win, double[:, ::1] wout,
               Py_ssize_t[::1] ctx_flat, Py_ssize_t[::1] ctx_offsets,
               Py_ssize_t[:, ::1] targets, double lr):
    cdef Py_ssize_t P = targets.shape[0], T = targets.shape[1], d = win.shape[1]
    cdef Py_ssize_t p, j, e, i, t, pos, lo, hi, cnt
    cdef double z, gscale, label, scale, loss = 0.0
    work_arr = np.zeros(2 * d, dtype=np.float64)
    cdef double[::1] work = work_arr
    for p in range(P):
        lo = ctx_offsets[p]
        hi = ctx_offsets[p + 1]
        cnt = hi - lo
        if cnt == 0:
            continue
        pos = targets[p, 0]
        for e in range(d):
            work[e] = 0.0
            work[d + e] = 0.0
        for i in range(lo, hi):
            t = ctx_flat[i]
            for e in range(d):
                work[e] += win[t, e]
        scale = 1.0 / cnt
        for e in range(d):
            work[e] *= scale
        for j in range(T):
            t = targets[p, j]
            if j > 0 and t == pos:
                continue
            label = 1.0 if j == 0 else 0.0
            z = 0.0
            for e in range(d):
                z += work[e] * wout[t, e]
            loss += _softplus(-z) if j == 0 else _softplus(z)
            gscale = _sigmoid(z) - label
            for e in range(d):
                work[d + e] += gscale * wout[t, e]
                wout[t, e] -= (lr * gscale) * work[e]
        scale = lr / cnt
        for i in range(lo, hi):
            t = ctx_flat[i]
            for e in range(d):
                win[t, e] -= scale * work[d + e]
    return loss
