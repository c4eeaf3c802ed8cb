import numpy as np
import pytest

from orcabehavior_hub.core.exceptions import InvalidArgumentError, ShapeMismatchError
from orcabehavior_hub.nn.tensor import (
    Tensor,
    avg_pool2d,
    conv2d,
    global_avg_pool,
    is_grad_enabled,
    no_grad,
)

from .conftest import _numeric_grad, relative_error

RNG = np.random.default_rng(0)


def _check_unary(op, x, tol=1e-6):
    """Градиент sum(op(x) * R) по x: аналитический против численного."""
    r = RNG.standard_normal(op(Tensor(x)).shape)

    def value():
        return float((op(Tensor(x)).data * r).sum())

    leaf = Tensor(x, requires_grad=True)
    (op(leaf) * r).sum().backward()
    assert relative_error(leaf.grad, _numeric_grad(value, x)) < tol


@pytest.mark.parametrize("name, op, shape", [
    ("exp", lambda t: t.exp(), (3, 4)),
    ("relu", lambda t: t.relu(), (3, 4)),
    ("sum_axis", lambda t: t.sum(axis=1), (3, 4)),
    ("sum_keep", lambda t: t.sum(axis=0, keepdims=True), (3, 4)),
    ("mean", lambda t: t.mean(axis=(0, 1)).reshape(1), (3, 4)),
    ("reshape", lambda t: t.reshape(4, 3), (3, 4)),
    ("log_softmax", lambda t: t.log_softmax(axis=1), (5, 4)),
    ("neg_sub", lambda t: 2.0 - t, (2, 2)),
    ("global_pool", global_avg_pool, (2, 3, 4, 5)),
    ("avg_pool_tail", lambda t: avg_pool2d(t, 2), (2, 2, 5, 7)),
])
def test_unary_gradients(name, op, shape):
    _check_unary(op, RNG.standard_normal(shape) + (0.05 if name == "relu" else 0.0))


def test_log_gradient():
    _check_unary(lambda t: t.log(), RNG.uniform(0.5, 2.0, (3, 3)))


@pytest.mark.parametrize("shape_a, shape_b", [((3, 4), (3, 4)), ((3, 4), (4,)), ((3, 1), (1, 4))])  # noqa: E501
@pytest.mark.parametrize("op", ["add", "mul", "div"])
def test_binary_gradients_with_broadcast(shape_a, shape_b, op):
    a = RNG.standard_normal(shape_a)
    b = RNG.uniform(0.5, 2.0, shape_b)
    fn = {"add": lambda x, y: x + y, "mul": lambda x, y: x * y,
          "div": lambda x, y: x / y}[op]
    r = RNG.standard_normal(np.broadcast_shapes(shape_a, shape_b))
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    (fn(ta, tb) * r).sum().backward()

    def value():
        return float((fn(Tensor(a), Tensor(b)).data * r).sum())

    assert ta.grad.shape == shape_a
    assert tb.grad.shape == shape_b
    assert relative_error(ta.grad, _numeric_grad(value, a)) < 1e-6
    assert relative_error(tb.grad, _numeric_grad(value, b)) < 1e-6


def test_matmul_gradient():
    a, b = RNG.standard_normal((3, 5)), RNG.standard_normal((5, 2))
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    (ta @ tb).sum().backward()
    assert np.allclose(ta.grad, np.ones((3, 2)) @ b.T)
    assert np.allclose(tb.grad, a.T @ np.ones((3, 2)))
    with pytest.raises(ShapeMismatchError):
        ta @ Tensor(np.ones((4, 2)))


@pytest.mark.parametrize("stride, padding", [(1, 1), (2, 1), (2, 0), (1, 0)])
def test_conv2d_gradients(stride, padding):
    x = RNG.standard_normal((2, 3, 6, 7))
    w = RNG.standard_normal((4, 3, 3, 3))
    bias = RNG.standard_normal(4)
    tx, tw, tb = (Tensor(v, requires_grad=True) for v in (x, w, bias))
    out = conv2d(tx, tw, tb, stride, padding)
    r = RNG.standard_normal(out.shape)
    (out * r).sum().backward()

    def value():
        return float((conv2d(Tensor(x), Tensor(w), Tensor(bias), stride, padding).data * r).sum())  # noqa: E501

    for analytic, arr in ((tx.grad, x), (tw.grad, w), (tb.grad, bias)):
        assert relative_error(analytic, _numeric_grad(value, arr)) < 1e-6


def test_conv2d_matches_direct_sum():
    x = RNG.standard_normal((1, 2, 4, 4))
    w = RNG.standard_normal((1, 2, 3, 3))
    out = conv2d(Tensor(x), Tensor(w), stride=1, padding=0).data
    assert out.shape == (1, 1, 2, 2)
    assert out[0, 0, 1, 0] == pytest.approx(float((x[0, :, 1:4, 0:3] * w[0]).sum()))


def test_conv2d_shape_errors():
    with pytest.raises(ShapeMismatchError):
        conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))
    with pytest.raises(InvalidArgumentError):
        conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))


def test_reused_node_accumulates():
    x = Tensor(np.array([3.0]), requires_grad=True)
    (x * x + x).sum().backward()
    assert x.grad.tolist() == [7.0]


def test_leaf_grad_accumulates_across_backward_calls():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (x * 2.0).sum().backward()
    (x * 3.0).sum().backward()
    assert x.grad.tolist() == [5.0, 5.0]
    x.zero_grad()
    assert x.grad is None


def test_backward_requires_scalar_with_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(InvalidArgumentError):
        (x * 2.0).backward()
    with pytest.raises(InvalidArgumentError):
        Tensor(np.ones(1)).backward()


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        assert not is_grad_enabled()
        y = (x * 2.0).sum()
    assert is_grad_enabled()
    assert not y.requires_grad
    z = (x * 3.0).detach()
    assert not z.requires_grad
    assert np.array_equal(z.data, [3.0, 3.0])


def test_deep_chain_does_not_hit_recursion_limit():
    x = Tensor(np.array([1.0]), requires_grad=True)
    y = x
    for _ in range(5_000):
        y = y + 0.0
    y.sum().backward()
    assert x.grad.tolist() == [1.0]


def test_item_and_integer_input():
    assert Tensor(np.array([[2.5]])).item() == 2.5
    assert Tensor([1, 2]).dtype == np.float64
    with pytest.raises(InvalidArgumentError):
        Tensor(np.ones(2)).item()
