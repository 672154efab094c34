"""Monte-Carlo ground-truth effects (PATE, CATE, SATE) and outcome-scale normalisation."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .datasets import FullTable
from .errors import ContractError, DegenerateError, ParameterError
from .numerics.rng import RngStream
from .scm import BINARY, ScmInstance, intervene_outcome, sigmoid

PATE, CATE, SATE = "PATE", "CATE", "SATE"
DEFAULT_K = 10_000


@dataclass(frozen=True)
class EffectTarget:
    kind: str
    K: int
    value: float
    query: tuple | None = None
    normalizer: tuple | None = None  # (q05, q95) of observed outcomes

    def __post_init__(self):
        if self.kind not in (PATE, CATE, SATE):
            raise ParameterError(f"unknown estimand {self.kind!r}")
        if (self.kind == CATE) != (self.query is not None):
            raise ParameterError("CATE needs a query; PATE and SATE must not carry one")
        if self.normalizer is not None and not self.normalizer[1] > self.normalizer[0]:
            raise ParameterError("normalizer needs q95 > q05")

    @property
    def scale(self) -> float:
        return 1.0 if self.normalizer is None else self.normalizer[1] - self.normalizer[0]

    @property
    def normalized_value(self) -> float:
        return self.value / self.scale

    def to_json(self) -> dict:
        doc = {"kind": self.kind, "K": self.K, "value": self.value}
        if self.query is not None:
            doc["query"] = list(self.query)
        if self.normalizer is not None:
            doc["normalizer"] = list(self.normalizer)
        return doc

    @classmethod
    def from_json(cls, doc: dict | str) -> "EffectTarget":
        if isinstance(doc, str):
            doc = json.loads(doc)
        q = doc.get("query")
        nz = doc.get("normalizer")
        return cls(doc["kind"], int(doc["K"]), float(doc["value"]),
                   tuple(q) if q is not None else None, tuple(nz) if nz is not None else None)


def _base_treatment(instance: ScmInstance, x: np.ndarray, stream: RngStream) -> np.ndarray | None:
    """Observational t given x for continuous treatment; None means contrast 1 vs 0."""
    if instance.treatment_kind == BINARY:
        return None
    u_t = stream.normal(size=x.shape)
    return instance.treatment_index(x, u_t)


def _contrast(instance: ScmInstance, x: np.ndarray, u_y: np.ndarray, t0: np.ndarray | None) -> np.ndarray:
    if t0 is None:
        return intervene_outcome(instance, x, 1.0, u_y) - intervene_outcome(instance, x, 0.0, u_y)
    return intervene_outcome(instance, x, t0 + 1.0, u_y) - intervene_outcome(instance, x, t0, u_y)


def unit_effects(instance: ScmInstance, x: np.ndarray, u_y: np.ndarray, t0: np.ndarray | None) -> np.ndarray:
    return _contrast(instance, np.asarray(x, float), np.asarray(u_y, float), t0)


def pate(instance: ScmInstance, K: int, stream: RngStream) -> EffectTarget:
    """Average over K draws of (x, u_y) of the do(t=1) minus do(t=0) outcome contrast.

    Continuous treatment uses the one-unit forward difference at t drawn from
    the instance's own treatment law.
    """
    if K < 1:
        raise ParameterError("K must be >= 1")
    d = instance.dim
    x = stream.normal(size=(K, d))
    u_y = stream.normal(size=(K, d))
    t0 = _base_treatment(instance, x, stream)
    return EffectTarget(PATE, K, float(np.mean(_contrast(instance, x, u_y, t0))))


def cate(instance: ScmInstance, query_x, K: int, stream: RngStream) -> EffectTarget:
    if K < 1:
        raise ParameterError("K must be >= 1")
    q = np.atleast_1d(np.asarray(query_x, dtype=float))
    if q.shape != (instance.dim,):
        raise ParameterError(f"query has shape {q.shape}, expected ({instance.dim},)")
    x = np.broadcast_to(q, (K, instance.dim))
    u_y = stream.normal(size=(K, instance.dim))
    t0 = _base_treatment(instance, x, stream)
    return EffectTarget(CATE, K, float(np.mean(_contrast(instance, x, u_y, t0))), query=tuple(q.tolist()))


def sate(instance: ScmInstance, table: FullTable, stream: RngStream | None = None) -> EffectTarget:
    """Mean unit-level contrast over the rows of ``table`` (latent x and u_y required).

    Continuous treatment contrasts each unit's observed t with t + 1.
    """
    if table is None or getattr(table, "x", None) is None or getattr(table, "u_y", None) is None:
        raise ContractError("SATE needs the latent x and u_y columns")
    t0 = None if instance.treatment_kind == BINARY else np.asarray(table.t, dtype=float)
    effects = _contrast(instance, table.x, table.u_y, t0)
    return EffectTarget(SATE, table.n, float(np.mean(effects)))


def outcome_quantiles(outcomes) -> tuple[float, float]:
    y = np.asarray(outcomes, dtype=float)
    q05, q95 = np.quantile(y, [0.05, 0.95])  # linear interpolation
    return float(q05), float(q95)


def normalize_effect(value: float, outcomes) -> tuple[float, tuple[float, float]]:
    """Divide an effect by the 5%-95% quantile gap of the observed outcomes."""
    q05, q95 = outcome_quantiles(outcomes)
    if q95 - q05 < 1e-12:
        raise DegenerateError("outcome quantile gap is degenerate")
    return value / (q95 - q05), (q05, q95)


def denormalize_effect(normalized: float, normalizer: tuple[float, float]) -> float:
    return normalized * (normalizer[1] - normalizer[0])


def with_normalizer(target: EffectTarget, outcomes) -> EffectTarget:
    _, nz = normalize_effect(target.value, outcomes)
    return EffectTarget(target.kind, target.K, target.value, target.query, nz)


def propensity(instance: ScmInstance, x, u_t) -> np.ndarray:
    return sigmoid(instance.treatment_index(np.asarray(x, float), np.asarray(u_t, float)))
