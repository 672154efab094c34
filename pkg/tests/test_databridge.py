import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalmeta import databridge as db
from causalmeta import trainer as tr
from causalmeta.errors import ContractError, ParameterError
from causalmeta.numerics.rng import RngStream

SCHEMA = {"columns": {"age": "covariate", "educ": "covariate", "treat": "treatment", "re78": "outcome",
                      "note": "ignore"}}


def write_table(path, rows, schema=SCHEMA, sidecar=True):
    lines = ["age,educ,treat,re78,note"] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    if sidecar:
        path.with_name(path.name + ".schema.json").write_text(json.dumps(schema))
    return path


def synthetic_table(n, seed, treated=0.4, shift=0.0, with_y=True):
    s = RngStream(seed)
    x = s.normal(size=(n, 2)) * [10, 3] + [30 + shift, 12]
    t = (s.uniform(size=n) < treated).astype(float)
    y = x[:, 0] * 0.1 + 2 * t + s.normal(size=n) if with_y else None
    return db.RealTable(("age", "educ"), x, t, y)


def test_three_row_file(tmp_path):
    p = write_table(tmp_path / "a.csv", [(20, 10, 1, 5.0, "x"), (30, 12, 0, 6.0, "y"), (40, 16, 1, 7.5, "z")])
    tab = db.load_table(p)
    assert tab.n == 3 and tab.dim == 2 and tab.covariate_names == ("age", "educ")
    assert tab.report.rows_dropped == 0


def test_gap_rows_are_dropped_and_counted(tmp_path):
    p = write_table(tmp_path / "a.csv", [(20, 10, 1, 5.0, "a"), (30, "", 0, 6.0, "b"), (40, 16, 1, 7.5, "c"),
                                        (50, 11, 0, "NA", "d")])
    tab = db.load_table(p)
    assert tab.n == 2 and tab.report.rows_dropped == 2 and tab.report.dropped_lines == (3, 5)


def test_standardisation_oracle(tmp_path):
    rng = np.random.default_rng(0)
    rows = [(float(a), float(b), int(c), float(d), "n") for a, b, c, d in
            zip(rng.normal(40, 9, 200), rng.normal(11, 2, 200), rng.integers(0, 2, 200), rng.normal(size=200))]
    z = db.load_table(write_table(tmp_path / "a.csv", rows)).standardized()
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-9)


def test_schema_errors(tmp_path):
    p = write_table(tmp_path / "a.csv", [(20, 10, 2, 5.0, "x"), (30, 12, 0, 6.0, "y")])
    with pytest.raises(ContractError, match="not binary"):
        db.load_table(p)
    assert db.load_table(p, binary_treatment=False).n == 2
    with pytest.raises(ContractError, match="missing"):
        db.load_table(p, {"columns": {**SCHEMA["columns"], "income": "covariate"}})
    with pytest.raises(ContractError):
        db.load_table(p, {"columns": {"age": "covariate"}})


def test_tables_are_immutable():
    tab = synthetic_table(10, 0)
    with pytest.raises(ValueError):
        tab.x[0, 0] = 1.0


def test_rows_as_is_keeps_x_t_and_redraws_y():
    fam = db.condition_family(synthetic_table(50, 1), "mlp", 1.0, db.ROWS_AS_IS)
    a = fam.sample_dataset(50, RngStream(1))
    b = fam.sample_dataset(50, RngStream(2))
    assert db.xt_block_bytes(a.dataset) == db.xt_block_bytes(b.dataset)
    assert not np.array_equal(a.dataset.y, b.dataset.y)
    with pytest.raises(ParameterError):
        fam.sample_dataset(51, RngStream(0))


@given(seed=st.integers(0, 2**32))
def test_linear_surface_sample_effect_is_the_jump(seed):
    fam = db.condition_family(synthetic_table(40, 2), "linear", 0.5, db.BOOTSTRAP)
    sim = fam.sample_dataset(40, RngStream(seed))
    assert sim.target.value == pytest.approx(sim.surface.beta_t, abs=1e-12)


def test_surface_a_effect_is_tau_and_b_matches_control_target():
    tab = synthetic_table(300, 3)
    a = db.condition_family(tab, "ihdp_a", 1.0, db.ROWS_AS_IS, tau=4.0).sample_dataset(300, RngStream(0))
    assert a.target.value == pytest.approx(4.0, abs=1e-12)
    b = db.condition_family(tab, "ihdp_b", 1.0, db.ROWS_AS_IS).sample_dataset(300, RngStream(1))
    x, t = b.dataset.blocks["covariate"], b.dataset.t
    ctrl = x[t == 0]
    effect_on_controls = np.mean(b.surface(ctrl, np.ones(len(ctrl))) - b.surface(ctrl, np.zeros(len(ctrl))))
    assert effect_on_controls == pytest.approx(4.0, abs=1e-9)


def test_mlp_outcomes_have_unit_scale_signal():
    fam = db.condition_family(synthetic_table(400, 4), "mlp", 0.0, db.ROWS_AS_IS)
    sim = fam.sample_dataset(400, RngStream(3))
    assert np.std(sim.dataset.y) == pytest.approx(1.0, rel=1e-9)


def test_bootstrap_preserves_covariate_means():
    tab = synthetic_table(500, 5)
    fam = db.condition_family(tab, "linear", 1.0, db.BOOTSTRAP)
    n = 5000
    x = fam.sample_dataset(n, RngStream(6)).dataset.blocks["covariate"]
    z = tab.standardized()
    se = z.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(x.mean(axis=0) - z.mean(axis=0)) < 3 * se)


def test_composition_with_no_controls_is_the_sample():
    rct = synthetic_table(30, 7, treated=1.0)
    obs = synthetic_table(100, 8, treated=0.0, shift=5)
    comp = db.compose_confounded(rct, obs, 10, RngStream(0))
    assert np.array_equal(comp.table.x, comp.randomized_sample.x)
    assert np.array_equal(comp.table.t, comp.randomized_sample.t)


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 60))
def test_composition_replaces_only_controls(seed, n):
    rct = synthetic_table(60, 9)
    obs = synthetic_table(200, 10, treated=0.0, shift=5)
    comp = db.compose_confounded(rct, obs, n, RngStream(seed))
    s, out = comp.randomized_sample, comp.table
    treated = s.t == 1
    assert out.t.mean() == s.t.mean()
    assert np.array_equal(out.x[treated], s.x[treated])
    assert np.array_equal(out.x[~treated], obs.x[comp.control_source_rows])
    assert np.array_equal(out.groups["randomized"], treated.astype(float))
    assert len(set(comp.control_source_rows.tolist())) == len(comp.control_source_rows)


def test_pool_exhaustion_and_with_replacement():
    rct = synthetic_table(50, 11, treated=0.0)
    small_pool = synthetic_table(5, 12, treated=0.0)
    with pytest.raises(ContractError):
        db.compose_confounded(rct, small_pool, 20, RngStream(0))
    comp = db.compose_confounded(rct, small_pool, 20, RngStream(0), replace=True)
    assert comp.table.n == 20


def test_reference_effect_is_the_difference_of_means():
    rct = synthetic_table(80, 13)
    comp = db.compose_confounded(rct, synthetic_table(200, 14, treated=0.0), 80, RngStream(1))
    s = comp.randomized_sample
    assert comp.reference_effect == pytest.approx(s.y[s.t == 1].mean() - s.y[s.t == 0].mean())


@pytest.mark.parametrize("n", [445, 200, 100])
def test_semisynthetic_split_sizes(n):
    rct = synthetic_table(445, 15)
    obs = synthetic_table(2500, 16, treated=0.0, shift=5)
    fam = db.condition_family(rct, "mlp", 0.5, db.COMPOSE, observational=obs)
    corpora = db.semisynthetic_train_eval_split(fam, n, 2, 2, RngStream(n))
    assert all(s.dataset.n == n for s in corpora.training)
    for pair in corpora.evaluation:
        assert db.xt_block_bytes(pair.simulated.dataset) == db.xt_block_bytes(pair.real)
        assert not np.array_equal(pair.simulated.dataset.y, pair.real.y)


def test_linear_training_targets_are_analytic():
    fam = db.condition_family(synthetic_table(100, 17), "linear", 1.0, db.COMPOSE,
                              observational=synthetic_table(400, 18, treated=0.0))
    corpora = db.semisynthetic_train_eval_split(fam, 60, 5, 0, RngStream(0))
    for s in corpora.training:
        assert s.target.value == pytest.approx(s.surface.beta_t, abs=1e-12)


def test_conditioned_family_feeds_the_trainer():
    fam = db.condition_family(synthetic_table(100, 19), "mlp", 0.5, db.BOOTSTRAP)
    c = tr.TrainConfig(estimand="SATE", dataset_size=30, batch_size=2)
    item = tr.sample_item(fam, c, RngStream(0))
    assert item.dataset.n == 30 and item.target.normalizer is not None
    with pytest.raises(ContractError):
        tr.sample_item(fam, tr.TrainConfig(dataset_size=30), RngStream(0))


def test_corpus_writer_is_deterministic(tmp_path):
    rct = synthetic_table(100, 20)
    fam = db.condition_family(rct, "mlp", 0.5, db.COMPOSE, observational=synthetic_table(300, 21, treated=0.0))
    a = db.write_semisynthetic(tmp_path / "a", db.semisynthetic_train_eval_split(fam, 50, 2, 2, RngStream(3)))
    b = db.write_semisynthetic(tmp_path / "b", db.semisynthetic_train_eval_split(fam, 50, 2, 2, RngStream(3)))
    assert a == b
    assert (tmp_path / "a" / "eval" / "manifest.json").read_text() == (tmp_path / "b" / "eval" / "manifest.json").read_text()
