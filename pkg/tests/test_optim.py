import numpy as np
import pytest

from tiledsent.errors import InvalidInputError
from tiledsent.optim import SGD, Adam
from tiledsent.tensor import Tensor


def quadratic_step(opt_cls, lr, steps=1):
    x = Tensor.param(np.array([3.0, -2.0]))
    opt = opt_cls([x], lr=lr)
    for _ in range(steps):
        opt.zero_grad()
        loss = (x * x).sum()
        loss.backward()
        opt.step()
    return x


def test_sgd_follows_negative_gradient():
    x = quadratic_step(SGD, lr=0.1)
    np.testing.assert_allclose(x.data, [3.0 - 0.6, -2.0 + 0.4])


def test_adam_converges_on_quadratic():
    x = quadratic_step(Adam, lr=0.1, steps=300)
    assert np.all(np.abs(x.data) < 1e-2)


@pytest.mark.parametrize("opt_cls", [SGD, Adam])
def test_zero_learning_rate_leaves_parameters_unchanged(opt_cls):
    x = quadratic_step(opt_cls, lr=0.0, steps=3)
    np.testing.assert_array_equal(x.data, [3.0, -2.0])


@pytest.mark.parametrize("opt_cls", [SGD, Adam])
def test_step_mutates_only_registered_parameters(opt_cls):
    registered = Tensor.param(np.ones(3))
    bystander = Tensor.param(np.ones(3))
    opt = opt_cls([registered], lr=0.5)
    loss = (registered * bystander).sum()
    loss.backward()
    opt.step()
    np.testing.assert_array_equal(bystander.data, np.ones(3))
    assert not np.array_equal(registered.data, np.ones(3))


def test_negative_learning_rate_rejected():
    with pytest.raises(InvalidInputError):
        SGD([Tensor.param(np.ones(1))], lr=-0.1)


def test_params_without_grad_are_skipped():
    x = Tensor.param(np.ones(2))
    opt = Adam([x], lr=0.1)
    opt.step()  # no backward ran; nothing to apply
    np.testing.assert_array_equal(x.data, np.ones(2))
