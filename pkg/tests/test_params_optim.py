import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from causalmeta.numerics.optim import Adam
from causalmeta.numerics.params import all_finite, count, flatten, global_norm, map_tree, subtree, unflatten

trees = st.dictionaries(
    st.text("abcdef.", min_size=1, max_size=6),
    arrays(np.float64, array_shapes(max_dims=3, max_side=4), elements=st.floats(-5, 5)),
    min_size=1, max_size=5)


@given(trees)
def test_flatten_round_trip(tree):
    vec, layout = flatten(tree)
    assert vec.shape == (count(tree),)
    back = unflatten(vec, layout)
    assert set(back) == set(tree)
    for k in tree:
        assert np.array_equal(back[k], tree[k])


@given(trees)
def test_global_norm_matches_flat_norm(tree):
    vec, _ = flatten(tree)
    assert global_norm(tree) == pytest.approx(np.linalg.norm(vec), rel=1e-12, abs=1e-300)


def test_subtree_and_map():
    tree = {"a.x": np.ones(2), "a.y": np.zeros(1), "b.x": np.ones(3)}
    assert set(subtree(tree, "a")) == {"x", "y"}  # prefix stripped
    doubled = map_tree(lambda v: 2 * v, tree)
    assert np.array_equal(doubled["b.x"], 2 * np.ones(3))
    assert all_finite(tree) and not all_finite({"z": np.array([np.nan])})


def _reference_adam(p, grads, rate, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - rate * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_adam_matches_reference_recursion():
    rng = np.random.default_rng(0)
    grads = [rng.normal(size=4) for _ in range(7)]
    opt = Adam(rate=0.01)
    p = {"w": np.full(4, 0.5)}
    for g in grads:
        p = opt.step(p, {"w": g})
    np.testing.assert_allclose(p["w"], _reference_adam(np.full(4, 0.5), grads, 0.01), rtol=1e-14)


def test_adam_first_step_is_sign_step():
    opt = Adam(rate=0.1)
    p = opt.step({"w": np.zeros(3)}, {"w": np.array([2.0, -0.5, 1e-3])})
    np.testing.assert_allclose(p["w"], [-0.1, 0.1, -0.1], rtol=1e-4)


def test_clipping_bounds_the_update_direction():
    g = {"w": np.array([30.0, 40.0])}
    a, b = Adam(rate=1.0, clip_norm=1.0), Adam(rate=1.0)
    a.step({"w": np.zeros(2)}, g)
    b.step({"w": np.zeros(2)}, {"w": g["w"] / 50.0})
    np.testing.assert_allclose(a.m["w"], b.m["w"], rtol=1e-14)


def test_step_does_not_mutate_inputs():
    p = {"w": np.ones(2)}
    Adam().step(p, {"w": np.ones(2)})
    assert np.array_equal(p["w"], np.ones(2))


def test_state_round_trip():
    opt = Adam(rate=0.05)
    p = {"w": np.ones(3)}
    for _ in range(3):
        p = opt.step(p, {"w": np.array([1.0, -2.0, 0.5])})
    clone = Adam(rate=0.05)
    clone.load_state_dict(opt.state_dict())
    g = {"w": np.array([0.3, 0.2, 0.1])}
    assert np.array_equal(opt.step(p, g)["w"], clone.step(p, g)["w"])
