import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalmeta import setmodel as sm
from causalmeta.datasets import ObservedDataset
from causalmeta.errors import ContractError, ParameterError
from causalmeta.numerics import autodiff as ad
from causalmeta.numerics.gradcheck import grad_check
from causalmeta.numerics.params import count
from causalmeta.numerics.rng import RngStream


def small(pooling="mean", width=3):
    return sm.SetModelConfig(input_width=width, embed_dim=8, num_blocks=2, num_heads=2, pooling=pooling)


@pytest.mark.parametrize("kwargs", [dict(embed_dim=10, num_heads=4), dict(num_blocks=0),
                                    dict(pooling="max"), dict(input_width=0)])
def test_config_validation(kwargs):
    base = dict(input_width=3, embed_dim=8, num_blocks=1, num_heads=2)
    base.update(kwargs)
    with pytest.raises(ParameterError):
        sm.SetModelConfig(**base)


def test_feedforward_defaults_to_four_times_embedding():
    assert sm.SetModelConfig(input_width=3, embed_dim=16, num_heads=4).feedforward_width == 64


def test_parameter_count_formula():
    cfg = small()
    E, F, W = cfg.embed_dim, cfg.feedforward_width, cfg.input_width
    per_block = 2 * 2 * E + 3 * E * E + (E * E + E) + (E * F + F) + (F * E + E)
    expected = (W * E + E) + (E * E + E) + 2 * per_block + 2 * E + (E * E + E) + (E + 1)
    assert count(sm.init_params(cfg, RngStream(0))) == expected


@pytest.mark.parametrize("pooling", ["mean", "attention"])
@settings(max_examples=15)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 12))
def test_permutation_invariance(pooling, seed, n):
    cfg = small(pooling)
    params = sm.init_params(cfg, RngStream(seed))
    rows = RngStream(seed, 1).normal(size=(1, n, 3))
    perm = RngStream(seed, 2).permutation(n)
    a = sm.forward_batch(params, rows, cfg).data
    b = sm.forward_batch(params, rows[:, perm], cfg).data
    assert abs(a[0] - b[0]) <= 1e-9 * max(1.0, abs(a[0]))


def test_batch_members_are_independent():
    cfg = small()
    params = sm.init_params(cfg, RngStream(0))
    rows = RngStream(1).normal(size=(3, 5, 3))
    together = sm.forward_batch(params, rows, cfg).data
    alone = [sm.forward_batch(params, rows[i:i + 1], cfg).data[0] for i in range(3)]
    np.testing.assert_allclose(together, alone, rtol=1e-12)


def test_width_mismatch_is_a_contract_error():
    cfg = small()
    params = sm.init_params(cfg, RngStream(0))
    with pytest.raises(ContractError):
        sm.forward_batch(params, np.zeros((1, 4, 5)), cfg)


@pytest.mark.parametrize("pooling", ["mean", "attention"])
def test_gradients_match_finite_differences(pooling):
    cfg = small(pooling)
    params = sm.init_params(cfg, RngStream(3))
    rows = RngStream(4).normal(size=(2, 6, 3))
    y = np.array([0.3, -0.4])

    def loss(p):
        d = sm.forward_batch(p, rows, cfg) - y
        return (d * d).mean()

    assert grad_check(loss, params, max_coords=6, rng=np.random.default_rng(0)) < 1e-6


def test_batch_loss_matches_forward():
    cfg = small()
    params = sm.init_params(cfg, RngStream(5))
    rows = RngStream(6).normal(size=(4, 5, 3))
    y = np.arange(4.0)
    mse, grads = sm.batch_loss(params, rows, y, cfg)
    pred = sm.forward_batch(params, rows, cfg).data
    assert mse == pytest.approx(np.mean((pred - y) ** 2), rel=1e-14)
    assert set(grads) == set(params)


def test_featurize_appends_query_on_every_row():
    ds = ObservedDataset("Confounder", [0.0, 1.0, 1.0], [1.0, 2.0, 3.0], {"covariate": [[4.0], [5.0], [6.0]]})
    rows = sm.featurize(ds, np.array([9.0]))
    assert rows.shape == (3, 4)
    assert np.array_equal(rows[:, 0], ds.t) and np.array_equal(rows[:, 3], [9.0] * 3)


def test_predict_rows_handles_mixed_sizes():
    cfg = small()
    params = sm.init_params(cfg, RngStream(0))
    items = [RngStream(i).normal(size=(n, 3)) for i, n in enumerate([4, 7, 4, 9])]
    out = sm.predict_rows(params, items, cfg, chunk=1)
    for r, v in zip(items, out):
        assert v == pytest.approx(sm.forward_batch(params, r[None], cfg).data[0], rel=1e-12)


def test_checkpoint_round_trip(tmp_path):
    cfg = small("attention")
    params = sm.init_params(cfg, RngStream(8))
    sm.save_checkpoint(tmp_path / "m.json", cfg, params, {"note": 1})
    cfg2, params2, extra = sm.load_checkpoint(tmp_path / "m.json")
    assert cfg2 == cfg and extra == {"note": 1}
    for k in params:
        assert np.array_equal(params[k], params2[k])


def test_training_reduces_loss_on_a_fixed_batch():
    from causalmeta.numerics.optim import Adam

    cfg = small()
    params = sm.init_params(cfg, RngStream(0))
    rows = RngStream(1).normal(size=(8, 10, 3))
    y = rows[:, :, 1].mean(axis=1)
    opt = Adam(rate=3e-3)
    first, _ = sm.batch_loss(params, rows, y, cfg)
    for _ in range(60):
        loss, g = sm.batch_loss(params, rows, y, cfg)
        params = opt.step(params, g)
    assert loss < 0.5 * first
