"""Kernel backend selection.

The compiled ``_fastops`` extension is preferred when it imported cleanly;
otherwise (or when ``TILEDSENT_PURE_PYTHON=1`` is set) the NumPy fallbacks
in ``_pyops`` are used. Both backends implement identical semantics; the
active one is reported in ``BACKEND``.
"""

import os

import numpy as np

from . import _pyops

try:
    from . import _fastops
except ImportError:
    _fastops = None

_FORCE_PY = os.environ.get("TILEDSENT_PURE_PYTHON", "").strip() not in ("", "0")
_impl = _pyops if (_fastops is None or _FORCE_PY) else _fastops

BACKEND = "python" if _impl is _pyops else "compiled"
python_backend = _pyops
compiled_backend = _fastops

__all__ = [
    "BACKEND",
    "conv_forward",
    "conv_backward",
    "tiled_conv_forward",
    "tiled_conv_backward",
    "sg_train",
    "cbow_train",
    "python_backend",
    "compiled_backend",
]


def _c2(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _ci(a):
    return np.ascontiguousarray(a, dtype=np.intp)


def conv_forward(x, w, b, stride=1, impl=None):
    impl = impl or _impl
    return impl.conv_forward(_c2(x), _c2(w), _c2(b), stride)


def conv_backward(x, w, stride, gout, impl=None):
    impl = impl or _impl
    return impl.conv_backward(_c2(x), _c2(w), stride, _c2(gout))


def tiled_conv_forward(x, w, b, impl=None):
    impl = impl or _impl
    w = _c2(w)
    b = _c2(b)
    if w.shape[0] == 1:
        # single bank: exactly a plain stride-1 convolution
        return impl.conv_forward(_c2(x), w[0], b[0], 1)
    return impl.tiled_conv_forward(_c2(x), w, b)


def tiled_conv_backward(x, w, gout, impl=None):
    impl = impl or _impl
    w = _c2(w)
    if w.shape[0] == 1:
        gx, gw, gb = impl.conv_backward(_c2(x), w[0], 1, _c2(gout))
        return gx, gw[None, :], gb[None, :]
    return impl.tiled_conv_backward(_c2(x), w, _c2(gout))


def sg_train(win, wout, centers, targets, lr, impl=None):
    impl = impl or _impl
    return impl.sg_train(win, wout, _ci(centers), _ci(targets), float(lr))


def cbow_train(win, wout, ctx_flat, ctx_offsets, targets, lr, impl=None):
    impl = impl or _impl
    return impl.cbow_train(
        win, wout, _ci(ctx_flat), _ci(ctx_offsets), _ci(targets), float(lr)
    )
