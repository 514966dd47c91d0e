import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tooluse import autodiff as ad
from tooluse.autodiff import AdamState, ShapeMismatch, Tensor, adam_step, grad_check, zero_grads


def test_sigmoid_value_and_derivative():
    x = Tensor(np.array(0.0), requires_grad=True)
    y = ad.sigmoid(x)
    assert y.item() == pytest.approx(0.5)
    y.backward()
    assert x.grad == pytest.approx(0.25)


def test_prelu_negative_slope():
    x = Tensor(np.array([[-1.0, 2.0]]), requires_grad=True)
    y = ad.prelu(x, 0.25)
    assert y.data.tolist() == [[-0.25, 2.0]]
    ad.tsum(y).backward()
    assert x.grad.tolist() == [[0.25, 1.0]]


def test_softmax_normalizes():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((4, 7)))
    y = ad.softmax(x, axis=1)
    assert np.allclose(y.data.sum(axis=1), 1.0)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_constant_function_zero_gradient():
    x = Tensor(np.ones((3, 3)), requires_grad=True)
    err = grad_check(lambda: ad.tsum(ad.mul(Tensor(np.zeros((3, 3))), x)), [x])
    assert err == 0.0


def test_quadratic_form_gradcheck():
    rng = np.random.default_rng(1)
    a = Tensor(rng.standard_normal((4, 4)))
    x = Tensor(rng.standard_normal((4, 1)), requires_grad=True)

    def f():
        return ad.tsum(ad.mul(x, ad.matmul(a, x)))

    assert grad_check(f, [x], h=1e-5) < 1e-7


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=5),
       st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_smooth_op_composite_gradcheck(n, m, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((n, m)), requires_grad=True)
    w = Tensor(rng.standard_normal((m, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((1, 3)), requires_grad=True)

    def f():
        h = ad.add(ad.matmul(x, w), b)
        h = ad.concat([ad.tanh(h), ad.sigmoid(h)], axis=1)
        h = ad.mul(h, h)
        p = ad.softmax(h, axis=1)
        logp = ad.log(ad.add(p, Tensor(np.full((1, 1), 0.5))))
        return ad.add(ad.tmean(logp), ad.tsum(ad.scale(ad.sub(h, ad.scale(h, 0.5)), 2.0)))

    assert grad_check(f, [x, w, b], h=1e-5) < 1e-6


def test_prelu_and_clamp_gradcheck_away_from_kinks():
    # piecewise-linear ops are checked at points safely off their breakpoints
    x = Tensor(np.array([[-2.0, -0.5, 0.5, 2.0]]), requires_grad=True)

    def f():
        h = ad.prelu(x, 0.25)
        return ad.tsum(ad.mul(h, ad.clamp(h, -1.0, 1.0)))

    assert grad_check(f, [x], h=1e-5) < 1e-8


def test_tile_rows_gradient_sums():
    x = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
    y = ad.tile_rows(x, 4)
    ad.tsum(y).backward()
    assert x.grad.tolist() == [[4.0, 4.0]]


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeMismatch):
        ad.tanh(x).backward()


def test_adam_zero_gradient_keeps_params_without_decay():
    p = {"w": Tensor(np.ones((2, 2)), requires_grad=True)}
    state = AdamState()
    adam_step(p, lr=1e-2, weight_decay=0.0, state=state)
    assert np.allclose(p["w"].data, 1.0)


def test_adam_descends_quadratic():
    x = Tensor(np.array([[1.0]]), requires_grad=True)
    state = AdamState()
    zero_grads([x])
    loss = ad.tsum(ad.mul(x, x))
    loss.backward()
    adam_step({"x": x}, lr=5e-4, weight_decay=0.0, state=state)
    assert 0.0 < x.data[0, 0] < 1.0


def test_adam_decoupled_weight_decay():
    x = Tensor(np.array([[2.0]]), requires_grad=True)
    state = AdamState()
    x.grad = np.zeros_like(x.data)
    adam_step({"x": x}, lr=0.1, weight_decay=0.5, state=state)
    assert x.data[0, 0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_gradient_accumulation_over_reuse():
    x = Tensor(np.array(3.0), requires_grad=True)
    y = ad.add(ad.mul(x, x), x)  # x^2 + x -> dy/dx = 2x + 1
    y.backward()
    assert x.grad == pytest.approx(7.0)
