"""Shared test helpers: a central finite-difference gradient checker."""

import numpy as np
import pytest

from tiledsent.tensor import Tensor

FD_STEP = 1e-5
FD_TOL = 1e-4


def finite_difference_check(build_loss, arrays, h=FD_STEP, tol=FD_TOL):
    """Compare analytic gradients of a scalar loss against central
    differences for every entry of every input array.

    ``build_loss`` receives one Tensor per input array and must return a
    scalar Tensor; it is re-invoked for each perturbed evaluation, so any
    randomness inside must be internally seeded. Returns the worst
    relative error, failing the test if it exceeds ``tol``.
    """
    base = [np.array(a, dtype=np.float64) for a in arrays]

    def run(values, want_grads=False):
        tensors = [Tensor.param(v.copy()) for v in values]
        loss = build_loss(*tensors)
        if want_grads:
            loss.backward()
            return [
                t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in tensors
            ]
        return loss.data.item()

    analytic = run(base, want_grads=True)
    worst = 0.0
    for ai in range(len(base)):
        flat_index = base[ai].size
        for j in range(flat_index):
            plus = [v.copy() for v in base]
            minus = [v.copy() for v in base]
            plus[ai].reshape(-1)[j] += h
            minus[ai].reshape(-1)[j] -= h
            numeric = (run(plus) - run(minus)) / (2.0 * h)
            an = analytic[ai].reshape(-1)[j]
            err = abs(an - numeric) / max(1.0, abs(an), abs(numeric))
            worst = max(worst, err)
    assert worst < tol, f"finite-difference mismatch: {worst:.3g} >= {tol}"
    return worst


def random_projection_loss(out, seed):
    """Reduce a tensor to a scalar with fixed random coefficients so the
    check exercises every output entry."""
    coeffs = np.random.default_rng(seed).normal(size=out.data.shape)
    return (out * Tensor.const(coeffs)).sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
