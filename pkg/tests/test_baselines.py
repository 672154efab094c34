import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalmeta import baselines as bl
from causalmeta import scm
from causalmeta.datasets import ObservedDataset
from causalmeta.errors import ContractError, DegenerateError, RankDeficiencyError
from causalmeta.numerics.rng import RngStream

seeds = st.integers(0, 2**32)
FAST = bl.MlpSettings(hidden=(8,), steps=40, rate=1e-2)


def _iv(seed, n=100, **priors):
    fam = scm.ScmFamily("Instrument", priors={k: scm.Prior.fixed(v) for k, v in priors.items()})
    inst, _, obs = scm.sample_observed(fam, n, RngStream(seed))
    return inst, obs


@given(seed=seeds)
def test_tsls_matches_covariance_ratio(seed):
    _, ds = _iv(seed)
    got = bl.estimate_baseline(bl.BaselineSpec("TslsLin"), ds)
    assert got == pytest.approx(bl.tsls_closed_form(ds), rel=1e-8, abs=1e-8)


@given(seed=seeds)
def test_noiseless_unconfounded_iv_recovers_the_effect(seed):
    inst, ds = _iv(seed, beta_y=0.0, beta_x=0.0)
    assert abs(bl.estimate_baseline(bl.BaselineSpec("TslsLin"), ds) - inst.beta_t) < 1e-6


@given(seed=seeds)
def test_noiseless_regression_recovers_the_effect(seed):
    fam = scm.ScmFamily(dim=2, priors={"beta_y": scm.Prior.fixed(0.0)})
    inst, _, ds = scm.sample_observed(fam, 50, RngStream(seed))
    assert abs(bl.estimate_baseline(bl.BaselineSpec("RegLin"), ds) - inst.beta_t) < 1e-6


def test_naive_difference_on_binary_treatment():
    ds = ObservedDataset("Confounder", [0, 0, 1, 1, 1], [1.0, 3.0, 5.0, 6.0, 7.0], {"covariate": np.zeros((5, 1))})
    assert bl.estimate_baseline(bl.BaselineSpec("NaiveDiff"), ds) == pytest.approx(4.0)
    assert bl.estimate_baseline(bl.BaselineSpec("TOnly"), ds) == pytest.approx(4.0)


def test_t_only_on_continuous_treatment_is_the_ols_slope():
    t = np.array([0.0, 1.0, 2.0, 3.0])
    ds = ObservedDataset("Confounder", t, 2 * t + 1, {"covariate": np.ones((4, 1))})
    assert bl.estimate_baseline(bl.BaselineSpec("TOnly"), ds) == pytest.approx(2.0)


def test_proxy_2sls_is_consistent():
    fam = scm.ScmFamily("Proxy", priors={"delta1": scm.Prior.fixed(0.3), "delta2": scm.Prior.fixed(0.3)})
    inst, _, ds = scm.sample_observed(fam, 50_000, RngStream(4))
    naive = bl.estimate_baseline(bl.BaselineSpec("TOnly"), ds)
    pr = bl.estimate_baseline(bl.BaselineSpec("Pr2slsLin"), ds)
    assert abs(pr - inst.beta_t) < 0.05 < abs(naive - inst.beta_t)


def test_rank_deficiency_and_degeneracy():
    x = np.arange(6.0)[:, None]
    ds = ObservedDataset("Confounder", 2 * x[:, 0] + 1, np.ones(6), {"covariate": x})
    with pytest.raises(RankDeficiencyError):
        bl.estimate_baseline(bl.BaselineSpec("RegLin"), ds)
    iv = ObservedDataset("Instrument", np.arange(5.0), np.arange(5.0), {"instrument": np.ones((5, 1))})
    with pytest.raises(DegenerateError):
        bl.tsls_closed_form(iv)
    with pytest.raises(DegenerateError):
        bl.estimate_baseline(bl.BaselineSpec("TslsLin"), iv)  # rank-deficient first stage is a DegenerateError too


def test_zero_first_stage_is_degenerate():
    _, ds = _iv(0, gamma_t=0.0, gamma_x=0.0)
    assert np.all(ds.t == 0)
    with pytest.raises(DegenerateError):
        bl.estimate_baseline(bl.BaselineSpec("TslsLin"), ds)


def test_required_columns_are_checked():
    _, ds = _iv(1)
    with pytest.raises(ContractError):
        bl.estimate_baseline(bl.BaselineSpec("RegLin"), ds)
    binary = ObservedDataset("Instrument", [0.0, 1.0, 1.0], [1.0, 2.0, 3.0], {"instrument": [[0.0], [1.0], [2.0]]})
    with pytest.raises(ContractError):
        bl.estimate_baseline(bl.BaselineSpec("TslsLin"), binary)
    assert np.isfinite(bl.estimate_baseline(bl.BaselineSpec("TslsLin", allow_binary_tsls=True), binary))
    with pytest.raises(ContractError):
        bl.BaselineSpec("Lasso")


def test_estimate_many_reports_failures_per_dataset():
    _, good = _iv(2)
    bad = ObservedDataset("Instrument", np.arange(5.0), np.arange(5.0), {"instrument": np.ones((5, 1))})
    est, status = bl.estimate_many(bl.BaselineSpec("TslsLin"), [good, bad])
    assert np.isfinite(est[0]) and np.isnan(est[1])
    assert status[0] == "ok" and status[1].startswith(("DegenerateError", "RankDeficiencyError"))


@settings(max_examples=5)
@given(seed=seeds)
def test_stacked_mlp_fits_are_independent(seed):
    fam = scm.ScmFamily(dim=2)
    data = [scm.sample_observed(fam, 30, RngStream(seed).child(i))[2] for i in range(3)]
    spec = bl.BaselineSpec("RegMlp", FAST)
    together, _ = bl.estimate_many(spec, data)
    alone = [bl.estimate_baseline(spec, d) for d in data]
    np.testing.assert_allclose(together, alone, rtol=1e-9, atol=1e-12)


def test_linear_activation_mlp_approaches_ols():
    fam = scm.ScmFamily(dim=1)
    inst, _, ds = scm.sample_observed(fam, 200, RngStream(3))
    spec = bl.BaselineSpec("RegMlp", bl.MlpSettings(hidden=(4,), steps=1500, rate=1e-2, activation="linear"))
    assert bl.estimate_baseline(spec, ds) == pytest.approx(bl.estimate_baseline(bl.BaselineSpec("RegLin"), ds),
                                                           abs=2e-2)


def test_mlp_cate_uses_the_query():
    fam = scm.ScmFamily(surface_kind="interaction", dim=1, priors={"beta_y": scm.Prior.fixed(0.0)})
    inst, _, ds = scm.sample_observed(fam, 200, RngStream(5))
    spec = bl.BaselineSpec("RegMlp", bl.MlpSettings(hidden=(16,), steps=600, rate=1e-2))
    est, _ = bl.estimate_many(spec, [ds, ds], [np.array([-1.0]), np.array([1.0])])
    truth = inst.surface.beta_x[0] * np.array([-1.0, 1.0]) + inst.surface.beta_t
    assert np.sign(est[1] - est[0]) == np.sign(truth[1] - truth[0])
