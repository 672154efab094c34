import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from causalmeta.errors import GraphError, NumericError, ParameterError
from causalmeta.numerics import autodiff as ad
from causalmeta.numerics.gradcheck import grad_check

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def _fd(fn, x, eps=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[i] += eps
        down[i] -= eps
        g[i] = (fn(up) - fn(down)) / (2 * eps)
    return g


UNARY = {
    "exp": (ad.exp, np.exp),
    "tanh": (ad.tanh, np.tanh),
    "sigmoid": (ad.sigmoid, lambda z: 1 / (1 + np.exp(-z))),
    "gelu": (ad.gelu, lambda z: 0.5 * z * (1 + np.tanh(np.sqrt(2 / np.pi) * (z + 0.044715 * z ** 3)))),
    "square": (ad.square, np.square),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@given(arrays(np.float64, (3, 2), elements=finite))
def test_unary_vjp_matches_finite_differences(name, x):
    op, ref = UNARY[name]
    a = ad.leaf(x)
    out = op(a)
    np.testing.assert_allclose(out.data, ref(x), rtol=1e-12, atol=1e-12)
    (g,) = ad.grad(ad.tsum(out), [a])
    np.testing.assert_allclose(g, _fd(lambda z: ref(z).sum(), x), rtol=1e-6, atol=1e-7)


def test_log_and_power_on_positive_inputs():
    x = np.array([[0.5, 1.3], [2.0, 0.1]])
    a = ad.leaf(x)
    (g,) = ad.grad(ad.tsum(ad.log(a) + a ** 1.5), [a])
    np.testing.assert_allclose(g, 1 / x + 1.5 * np.sqrt(x), rtol=1e-12)


@given(arrays(np.float64, (4, 3), elements=finite), arrays(np.float64, (3,), elements=finite))
def test_broadcast_gradients_are_reduced(a, b):
    ta, tb = ad.leaf(a), ad.leaf(b)
    out = ad.tsum(ta * tb + tb)
    ga, gb = ad.grad(out, [ta, tb])
    np.testing.assert_allclose(ga, np.broadcast_to(b, a.shape))
    np.testing.assert_allclose(gb, a.sum(axis=0) + a.shape[0])


def test_batched_matmul_gradient():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 4, 3)), rng.normal(size=(3, 5))
    ta, tb = ad.leaf(a), ad.leaf(b)
    w = rng.normal(size=(2, 4, 5))
    ga, gb = ad.grad(ad.tsum((ta @ tb) * w), [ta, tb])
    np.testing.assert_allclose(ga, _fd(lambda z: ((z @ b) * w).sum(), a), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(gb, _fd(lambda z: ((a @ z) * w).sum(), b), rtol=1e-6, atol=1e-8)


def test_softmax_rows_sum_to_one_and_gradient():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 5)) * 4
    w = rng.normal(size=(3, 5))
    s = ad.softmax(ad.leaf(x), axis=-1)
    np.testing.assert_allclose(s.data.sum(axis=-1), 1.0, rtol=1e-14)

    def ref(z):
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return ((e / e.sum(axis=-1, keepdims=True)) * w).sum()

    a = ad.leaf(x)
    (g,) = ad.grad(ad.tsum(ad.softmax(a) * w), [a])
    np.testing.assert_allclose(g, _fd(ref, x), rtol=1e-6, atol=1e-8)


def test_softmax_is_stable_for_large_logits():
    s = ad.softmax(ad.leaf(np.array([[1000.0, 999.0, -1000.0]])))
    assert np.isfinite(s.data).all()


def test_layer_norm_gradients():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 3, 6))
    gain, off = rng.normal(size=6), rng.normal(size=6)
    w = rng.normal(size=x.shape)

    def ref(z, g=gain, o=off):
        mu = z.mean(-1, keepdims=True)
        var = z.var(-1, keepdims=True)
        return (((z - mu) / np.sqrt(var + 1e-5) * g + o) * w).sum()

    tx, tg, to = ad.leaf(x), ad.leaf(gain), ad.leaf(off)
    gx, gg, go = ad.grad(ad.tsum(ad.layer_norm(tx, tg, to) * w), [tx, tg, to])
    np.testing.assert_allclose(gx, _fd(ref, x), rtol=1e-5, atol=1e-7)
    np.testing.assert_allclose(gg, _fd(lambda g: ref(x, g=g), gain), rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(go, _fd(lambda o: ref(x, o=o), off), rtol=1e-6, atol=1e-7)


def test_getitem_concat_reshape_transpose():
    x = np.arange(12.0).reshape(3, 4)
    a = ad.leaf(x)
    out = ad.concat([a[:, :2], a.transpose().reshape(3, 4)[:, 1:2]], axis=1)
    (g,) = ad.grad(ad.tsum(out * out), [a])
    np.testing.assert_allclose(g, _fd(lambda z: (np.concatenate([z[:, :2], z.T.reshape(3, 4)[:, 1:2]], 1) ** 2).sum(), x),
                               rtol=1e-6)


def test_shared_subexpression_accumulates():
    a = ad.leaf(np.array(2.0))
    b = a * a
    (g,) = ad.grad(b * b + b, [a])  # a^4 + a^2
    assert g == pytest.approx(4 * 8 + 2 * 2)


def test_unused_leaf_has_zero_gradient():
    a, b = ad.leaf(np.ones(3)), ad.leaf(np.ones(2))
    ga, gb = ad.grad(ad.tsum(a), [a, b])
    assert np.array_equal(gb, np.zeros(2))


def test_grad_rejects_non_scalar_output():
    a = ad.leaf(np.ones(3))
    with pytest.raises(GraphError):
        ad.grad(a * 2, [a])


def test_grad_rejects_non_tensor_output():
    with pytest.raises(GraphError):
        ad.grad(3.0, [])


def test_grad_rejects_non_finite_output():
    a = ad.leaf(np.array([-1.0]))
    with pytest.raises(NumericError):
        ad.grad(ad.tsum(ad.log(a)), [a])


def test_grad_check_contract():
    params = {"w": np.array([0.3, -0.2])}
    loss = lambda p: ad.tsum(ad.tanh(p["w"]) ** 2)  # noqa: E731
    assert grad_check(loss, params) < 1e-8
    assert grad_check(loss, {}) == 0.0
    with pytest.raises(ParameterError):
        grad_check(loss, params, epsilon=0.0)
    with pytest.raises(ParameterError):
        grad_check(loss, params, epsilon=0.1)
    with pytest.raises(NumericError):
        grad_check(lambda p: ad.tsum(ad.log(p["w"])), {"w": np.array([-1.0])})


def test_grad_check_detects_a_wrong_vjp():
    def bad_square(a):
        return ad._node(a.data ** 2, (a, lambda g: g * a.data))  # missing factor 2

    params = {"w": np.array([0.7, 1.1])}
    assert grad_check(lambda p: ad.tsum(bad_square(p["w"])), params) > 0.1
