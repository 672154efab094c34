"""Desk-scale model and schedule presets (single CPU core, float64).

The full-size set regressor (embedding 64, eight blocks) costs about a
second per step of 32 datasets here; these presets keep a 4,000-step run
near twenty minutes.
"""

from __future__ import annotations

from . import estimands as est
from .setmodel import SetModelConfig
from .trainer import TrainConfig, input_width

DESK_MODEL = dict(embed_dim=32, num_blocks=4, num_heads=4)
DESK_STEPS = 4000


def desk_model(family, estimand: str = est.PATE, **overrides) -> SetModelConfig:
    return SetModelConfig(input_width=input_width(family, estimand), **{**DESK_MODEL, **overrides})


def desk_train(steps: int = DESK_STEPS, estimand: str = est.PATE, seed: int = 0, dataset_size: int = 100,
               **overrides) -> TrainConfig:
    base = dict(batch_size=32, epochs=1, datasets_per_epoch=32 * steps, dataset_size=dataset_size,
                estimand=estimand, K=1000, rate=1e-3, decay="cosine", warmup_steps=200, seed=seed,
                log_every=500)
    base.update(overrides)
    return TrainConfig(**base)
