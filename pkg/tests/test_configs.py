from pathlib import Path

import pytest

from causalmeta.config import ExperimentConfig

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_config_resolves(path):
    cfg = ExperimentConfig.load(path)
    train = cfg.train_config()
    if cfg.family.get("kind", "scm") == "scm":
        family = cfg.build_family()
        assert cfg.model_config(family, train.estimand).input_width > 2
        for kind in cfg.baseline_kinds(family.structure):
            assert kind
