import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causalmeta.errors import ParameterError
from causalmeta.numerics.rng import Bernoulli, Normal, RngStream, Uniform, draw

seeds = st.integers(min_value=0, max_value=2**64 - 1)
keys = st.lists(st.integers(min_value=0, max_value=2**32), min_size=1, max_size=4)


@given(seeds, st.integers(0, 2**20))
def test_same_key_same_sequence(seed, sid):
    a = RngStream(seed, sid).normal(size=16)
    b = RngStream(seed, sid).normal(size=16)
    assert np.array_equal(a, b)


@given(seeds, keys)
def test_child_is_a_pure_function_of_keys(seed, ks):
    root = RngStream(seed)
    root.normal(size=5)  # drawing from the parent must not move its children
    a = root.child(*ks).uniform(size=8)
    b = RngStream(seed).child(*ks).uniform(size=8)
    assert np.array_equal(a, b)


def test_distinct_children_differ():
    root = RngStream(7)
    draws = {tuple(root.child(i).integers(0, 2**62, 4)) for i in range(200)}
    assert len(draws) == 200


def test_stream_ids_do_not_collide_with_seeds():
    a = RngStream(1, 2).normal(size=4)
    b = RngStream(2, 1).normal(size=4)
    assert not np.array_equal(a, b)


def test_state_round_trip_through_json(stream):
    stream.normal(size=3)
    state = json.loads(json.dumps(stream.get_state()))
    ahead = stream.normal(size=10)
    restored = RngStream.from_state(state)
    assert np.array_equal(restored.normal(size=10), ahead)


def test_uniform_moments():
    x = RngStream(3).uniform(-1, 1, 200_000)
    assert abs(x.mean()) < 4 * np.sqrt(1 / 3 / len(x))
    assert abs(x.var() - 1 / 3) < 0.01


@pytest.mark.parametrize("law", [Uniform(1.0, 1.0), Uniform(2.0, 1.0), Normal(0.0, 0.0),
                                 Normal(0.0, -1.0), Bernoulli(1.5), Bernoulli(-0.1)])
def test_invalid_law_parameters_raise(law):
    with pytest.raises(ParameterError):
        draw(RngStream(0), law, (3,))


def test_bernoulli_is_binary():
    x = draw(RngStream(0), Bernoulli(0.3), (1000,))
    assert set(np.unique(x)) <= {0.0, 1.0}
    assert abs(x.mean() - 0.3) < 0.06
