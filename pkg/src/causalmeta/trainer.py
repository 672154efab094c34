"""Meta-training loop: stream (dataset, target) pairs from a family and fit the set model."""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import estimands as est
from . import setmodel as sm
from .datasets import STRUCTURE_ROLES, ObservedDataset, observe
from .errors import ContractError, DivergenceError, NumericError, ParameterError
from .numerics.optim import Adam
from .numerics.rng import RngStream
from .scm import ScmFamily, sample_full_dataset, sample_scm

MODEL_STREAM, DATA_STREAM = 1, 2


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 1
    datasets_per_epoch: int = 128_000
    fixed_corpus: bool = False
    dataset_size: int = 100
    estimand: str = est.PATE
    K: int = est.DEFAULT_K
    rate: float = 1e-4
    decay: str = "cosine"  # or "constant"
    warmup_steps: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 1.0
    normalize: bool | None = None  # None: normalise iff the family's surfaces are nonlinear
    seed: int = 0
    checkpoint_every: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.batch_size < 1 or self.K < 1 or self.dataset_size < 2:
            raise ParameterError("need batch_size >= 1, K >= 1, dataset_size >= 2")
        if self.rate <= 0 or self.epochs < 1 or self.datasets_per_epoch < 1:
            raise ParameterError("rate, epochs and datasets_per_epoch must be positive")
        if self.estimand not in (est.PATE, est.CATE, est.SATE):
            raise ParameterError(f"unknown estimand {self.estimand!r}")
        if self.decay not in ("cosine", "constant"):
            raise ParameterError(f"unknown decay {self.decay!r}")

    @property
    def steps_per_epoch(self) -> int:
        return max(1, self.datasets_per_epoch // self.batch_size)

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    def rate_at(self, step: int) -> float:
        warm = min(1.0, (step + 1) / self.warmup_steps) if self.warmup_steps else 1.0
        if self.decay == "constant":
            return self.rate * warm
        return self.rate * warm * 0.5 * (1.0 + math.cos(math.pi * step / self.total_steps))


@dataclass
class TrainingItem:
    dataset: ObservedDataset
    target: est.EffectTarget
    query: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def label(self) -> float:
        """The value the model is trained to output (normalised when a normaliser is set)."""
        return self.target.normalized_value


def input_width(family, estimand: str) -> int:
    d = family.dim
    width = 2 + d * len(STRUCTURE_ROLES[family.structure])
    return width + (d if estimand == est.CATE else 0)


def wants_normalization(family, config: TrainConfig) -> bool:
    if config.normalize is not None:
        return config.normalize
    return bool(getattr(family, "nonlinear", False))


def sample_item(family, config: TrainConfig, stream: RngStream) -> TrainingItem:
    """One (dataset, query, target) triple, deterministic in ``stream``."""
    if hasattr(family, "sample_training_item"):
        return family.sample_training_item(config, stream)
    inst = sample_scm(family, stream)
    table = sample_full_dataset(inst, config.dataset_size, stream)
    data = observe(table, family.structure)
    query = None
    if config.estimand == est.PATE:
        target = est.pate(inst, config.K, stream)
    elif config.estimand == est.CATE:
        query = stream.normal(size=family.dim)
        target = est.cate(inst, query, config.K, stream)
    else:
        target = est.sate(inst, table, stream)
    if wants_normalization(family, config):
        target = est.with_normalizer(target, data.y)
    return TrainingItem(data, target, query, {"surface": inst.surface.kind, "instance": inst})


def item_stream(config: TrainConfig, step: int, slot: int) -> RngStream:
    root = RngStream(config.seed, DATA_STREAM)
    if config.fixed_corpus:
        return root.child((step * config.batch_size + slot) % config.datasets_per_epoch)
    return root.child(step, slot)


def sample_training_batch(family, config: TrainConfig, stream: RngStream | None = None,
                          step: int = 0) -> list[TrainingItem]:
    """``batch_size`` items; with ``stream`` given, items are children of it, else of the step key."""
    items = []
    for i in range(config.batch_size):
        s = stream.child(i) if stream is not None else item_stream(config, step, i)
        items.append(sample_item(family, config, s))
    return items


def rows_of(items: Sequence[TrainingItem]) -> list[np.ndarray]:
    return [sm.featurize(it.dataset, it.query) for it in items]


@dataclass
class TrainedModel:
    model_config: sm.SetModelConfig
    train_config: TrainConfig
    params: dict
    curve: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def normalized(self) -> bool:
        return bool(self.provenance.get("normalized", False))

    @property
    def estimand(self) -> str:
        return self.train_config.estimand

    def save(self, path: str | Path, optimizer: Adam | None = None) -> None:
        extra = {"train_config": asdict(self.train_config), "curve": self.curve,
                 "provenance": self.provenance}
        if optimizer is not None:
            extra["optimizer"] = optimizer.state_dict()
        sm.save_checkpoint(path, self.model_config, self.params, extra)

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        config, params, extra = sm.load_checkpoint(path)
        tc = TrainConfig(**extra.get("train_config", {}))
        return cls(config, tc, params, list(extra.get("curve", [])), extra.get("provenance", {}))


def train(family, model_config: sm.SetModelConfig, config: TrainConfig,
          checkpoint_path: str | Path | None = None, resume: bool = False,
          max_steps: int | None = None, progress=sys.stderr) -> TrainedModel:
    """Run the meta-training loop.

    ``max_steps`` stops early (the schedule still spans ``total_steps``), which
    is how an interrupted run is simulated; ``resume`` continues from
    ``checkpoint_path``.
    """
    expected = input_width(family, config.estimand)
    if model_config.input_width != expected:
        raise ContractError(f"model input width {model_config.input_width} != {expected} for this family")
    params = sm.init_params(model_config, RngStream(config.seed, MODEL_STREAM))
    opt = Adam(rate=config.rate, beta1=config.beta1, beta2=config.beta2, eps=config.eps,
               clip_norm=config.clip_norm)
    curve: list[float] = []
    start = 0
    if resume and checkpoint_path is not None and Path(checkpoint_path).exists():
        _, params, extra = sm.load_checkpoint(checkpoint_path)
        curve = list(extra.get("curve", []))
        opt.load_state_dict(extra["optimizer"])
        start = len(curve)
    provenance = {"family_hash": _family_hash(family), "seed": config.seed,
                  "normalized": wants_normalization(family, config),
                  "structure": family.structure, "dim": family.dim}
    model = TrainedModel(model_config, config, params, curve, provenance)

    stop = config.total_steps if max_steps is None else min(config.total_steps, max_steps)
    bad_streak = 0
    for step in range(start, stop):
        items = sample_training_batch(family, config, step=step)
        rows = np.stack(rows_of(items))
        targets = np.array([it.label for it in items])
        try:
            loss, grads = sm.batch_loss(model.params, rows, targets, model_config)
        except NumericError:
            loss, grads = float("nan"), None
        curve.append(loss)
        if grads is None or not np.isfinite(loss):
            bad_streak += 1
            if bad_streak >= 10:
                raise DivergenceError(f"loss non-finite for 10 consecutive steps at step {step}", curve)
            continue
        bad_streak = 0
        model.params = opt.step(model.params, grads, config.rate_at(step))
        done = step + 1
        if progress is not None and config.log_every and (done % config.log_every == 0 or done == stop):
            window = curve[-config.log_every:]
            print(f"step {done}/{config.total_steps} mse {np.nanmean(window):.5f}", file=progress, flush=True)
        if checkpoint_path is not None and config.checkpoint_every and done % config.checkpoint_every == 0:
            model.save(checkpoint_path, opt)
    if checkpoint_path is not None:
        model.save(checkpoint_path, opt)
    return model


def _family_hash(family) -> str:
    if hasattr(family, "spec_hash"):
        return family.spec_hash()
    return "unhashed"


def predict_effect(model: TrainedModel, dataset: ObservedDataset, query=None) -> float:
    return float(predict_many(model, [dataset], None if query is None else [query])[0])


def predict_many(model: TrainedModel, datasets: Sequence[ObservedDataset],
                 queries: Sequence | None = None) -> np.ndarray:
    """Batched forward passes; un-normalises with each dataset's own outcome quantiles."""
    needs_query = model.estimand == est.CATE
    if needs_query != (queries is not None):
        raise ContractError("query presence must match the training estimand")
    rows = []
    for i, ds in enumerate(datasets):
        r = sm.featurize(ds, None if queries is None else queries[i])
        if r.shape[1] != model.model_config.input_width:
            raise ContractError(f"dataset layout has width {r.shape[1]}, model expects "
                                f"{model.model_config.input_width}")
        rows.append(r)
    raw = sm.predict_rows(model.params, rows, model.model_config)
    if model.normalized:
        scales = np.array([np.subtract(*est.outcome_quantiles(ds.y)[::-1]) for ds in datasets])
        raw = raw * scales
    return raw


def write_curve(path: str | Path, curve: Sequence[float]) -> None:
    lines = ["step,mse"] + [f"{i + 1},{v!r}" for i, v in enumerate(curve)]
    Path(path).write_text("\n".join(lines) + "\n")


def config_to_json(config: TrainConfig) -> str:
    return json.dumps(asdict(config), sort_keys=True)
