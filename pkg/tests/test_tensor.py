import numpy as np
import pytest

from conftest import finite_difference_check, random_projection_loss
from tiledsent.errors import InvalidInputError
from tiledsent.tensor import Tensor, stack


def test_sum_gradient_is_ones():
    x = Tensor.param(np.array([1.0, -2.0, 3.0]))
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones(3))


def test_constant_loss_leaves_zero_gradient():
    x = Tensor.param(np.array([1.0, 2.0]))
    loss = (x * 0.0).sum()
    loss.backward()
    np.testing.assert_array_equal(x.grad, np.zeros(2))


def test_backward_rejects_non_scalar():
    x = Tensor.param(np.array([1.0, 2.0]))
    with pytest.raises(InvalidInputError):
        (x + x).backward()


def test_shared_node_gradient_accumulates_once_per_use():
    # loss = x*x + x -> dloss/dx = 2x + 1
    x = Tensor.param(np.array([3.0]))
    loss = (x * x + x).sum()
    loss.backward()
    np.testing.assert_allclose(x.grad, [7.0])


def test_diamond_graph_visits_each_node_once():
    # y = x + x; loss = y * y; grad = 4 * (2x) / ... = 8x
    x = Tensor.param(np.array([2.0]))
    y = x + x
    loss = (y * y).sum()
    loss.backward()
    np.testing.assert_allclose(x.grad, [16.0])


def test_requires_grad_propagation():
    a = Tensor.const(np.ones(3))
    b = Tensor.param(np.ones(3))
    assert not (a + a).requires_grad
    assert (a + b).requires_grad
    out = a * b
    out.sum().backward()
    assert a.grad is None
    np.testing.assert_array_equal(b.grad, np.ones(3))


def test_shape_mismatch_raises():
    a = Tensor.param(np.ones(3))
    b = Tensor.param(np.ones(4))
    with pytest.raises(InvalidInputError):
        a + b
    with pytest.raises(InvalidInputError):
        a * b


def test_matvec_shapes_and_values():
    w = Tensor.param(np.array([[1.0, 2.0], [3.0, 4.0]]))
    x = Tensor.param(np.array([1.0, 1.0]))
    np.testing.assert_allclose(w.matvec(x).data, [3.0, 7.0])
    with pytest.raises(InvalidInputError):
        w.matvec(Tensor.param(np.ones(3)))


def test_max_tie_routes_to_lowest_index():
    x = Tensor.param(np.array([2.0, 2.0, 2.0]))
    m = x.max(axis=0)
    m.backward()
    np.testing.assert_array_equal(x.grad, [1.0, 0.0, 0.0])


def test_softmax_sums_to_one_and_requires_vector():
    z = Tensor.param(np.array([0.3, -1.2, 5.0]))
    s = z.softmax()
    assert abs(s.data.sum() - 1.0) < 1e-9
    with pytest.raises(InvalidInputError):
        Tensor.param(np.ones((2, 2))).softmax()


def test_clamp_gradient_masked_outside_range():
    x = Tensor.param(np.array([-1.0, 0.5, 2.0]))
    loss = x.clamp(0.0, 1.0).sum()
    loss.backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


@pytest.mark.parametrize("seed", range(5))
def test_elementary_op_gradients_match_finite_differences(seed):
    gen = np.random.default_rng(seed)
    a = gen.normal(size=(4,))
    b = gen.normal(size=(4,))
    w = gen.normal(size=(3, 4))

    def loss(ta, tb, tw):
        mixed = (ta * tb + ta) * 0.5 - tb
        out = tw.matvec(mixed.tanh())
        return random_projection_loss(out.sigmoid(), seed)

    finite_difference_check(loss, [a, b, w])


@pytest.mark.parametrize("seed", range(3))
def test_exp_log_softmax_gradients(seed):
    gen = np.random.default_rng(100 + seed)
    z = gen.normal(size=6)

    def loss(tz):
        return random_projection_loss(tz.softmax(), seed) + (
            tz.exp().log() * 0.1
        ).sum()

    finite_difference_check(loss, [z])


def test_stack_gradient_splits_back():
    a = Tensor.param(np.array([1.0, 2.0]))
    b = Tensor.param(np.array([5.0, 1.0]))
    out = stack([a, b]).max(axis=0)  # -> [5, 2]
    np.testing.assert_allclose(out.data, [5.0, 2.0])
    out.sum().backward()
    np.testing.assert_array_equal(a.grad, [0.0, 1.0])
    np.testing.assert_array_equal(b.grad, [1.0, 0.0])


def test_forward_and_backward_are_deterministic():
    def run():
        gen = np.random.default_rng(7)
        x = Tensor.param(gen.normal(size=8))
        w = Tensor.param(gen.normal(size=(3, 8)))
        out = w.matvec(x.tanh()).softmax()
        loss = random_projection_loss(out, 7)
        loss.backward()
        return out.data.copy(), x.grad.copy(), w.grad.copy()

    first = run()
    second = run()
    for f, s in zip(first, second):
        assert np.array_equal(f, s)


def test_pick_selects_and_routes_gradient():
    x = Tensor.param(np.array([1.0, 4.0, 9.0]))
    p = x.pick(2)
    assert p.data == 9.0
    p.backward()
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])
    with pytest.raises(InvalidInputError):
        x.pick(3)
