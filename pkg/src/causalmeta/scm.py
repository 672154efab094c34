"""SCM families, concrete instances, dataset sampling and interventions.

Default priors follow the linear data-generating process used throughout::

    gamma_t, beta_t, beta_y ~ U(-1, 1)
    gamma_x, beta_x         ~ U(-2, -1) u U(1, 2)
    delta_1, delta_2        ~ U(0, 1)
    x, u_t, u_y             ~ N(0, I_d)
    w_j                     ~ N(x, delta_j)        (delta_j is a standard deviation)
    t = gamma_x . x + gamma_t . u_t                (binary: t ~ Bern(sigmoid(.)))
    y = f(x, t) + beta_y . u_y
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import surfaces as sf
from .datasets import STRUCTURES, FullTable, observe  # noqa: F401  (re-exported)
from .errors import ParameterError
from .numerics.rng import RngStream

CONTINUOUS = "continuous"
BINARY = "binary"
SURFACE_KINDS = ("linear", "interaction", "abs_interaction", "mlp", "spline", "tree")
ARMWISE_KINDS = ("spline", "tree")


@dataclass(frozen=True)
class Prior:
    """``interval``: U(low, high); ``band``: U(-high, -low) u U(low, high); ``fixed``: constant."""

    kind: str
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if self.kind not in ("interval", "band", "fixed"):
            raise ParameterError(f"unknown prior kind {self.kind!r}")
        if self.kind != "fixed" and not self.low < self.high:
            raise ParameterError(f"prior needs low < high: {self}")
        if self.kind == "band" and self.low < 0:
            raise ParameterError("band prior needs low >= 0")

    @classmethod
    def interval(cls, low, high):
        return cls("interval", float(low), float(high))

    @classmethod
    def band(cls, low, high):
        return cls("band", float(low), float(high))

    @classmethod
    def fixed(cls, value):
        return cls("fixed", float(value), float(value))

    def sample(self, stream: RngStream, size) -> np.ndarray:
        if self.kind == "fixed":
            return np.full(size, self.low)
        if self.kind == "interval":
            return stream.uniform(self.low, self.high, size)
        mag = stream.uniform(self.low, self.high, size)
        sign = np.where(stream.uniform(0.0, 1.0, size) < 0.5, -1.0, 1.0)
        return sign * mag

    def contains(self, v) -> bool:
        v = np.asarray(v)
        if self.kind == "fixed":
            return bool(np.all(v == self.low))
        if self.kind == "interval":
            return bool(np.all((v > self.low) & (v < self.high)))
        return bool(np.all((np.abs(v) > self.low) & (np.abs(v) < self.high)))


def default_priors() -> dict[str, Prior]:
    return {
        "gamma_t": Prior.interval(-1, 1), "beta_t": Prior.interval(-1, 1), "beta_y": Prior.interval(-1, 1),
        "gamma_x": Prior.band(1, 2), "beta_x": Prior.band(1, 2),
        "delta1": Prior.interval(0, 1), "delta2": Prior.interval(0, 1),
    }


@dataclass(frozen=True)
class ScmFamily:
    """A sampler over SCMs sharing one causal structure."""

    structure: str = "Confounder"
    treatment_kind: str = CONTINUOUS
    surface_kind: str = "linear"
    dim: int = 1
    priors: dict = field(default_factory=default_priors)
    mixture: tuple = ()  # ((kind, weight), ...) used when surface_kind == "mixture"

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ParameterError(f"unknown structure {self.structure!r}")
        if self.treatment_kind not in (CONTINUOUS, BINARY):
            raise ParameterError(f"unknown treatment kind {self.treatment_kind!r}")
        if self.dim < 1:
            raise ParameterError("dim must be >= 1")
        priors = dict(default_priors())
        priors.update(self.priors)
        object.__setattr__(self, "priors", priors)
        kinds = [self.surface_kind]
        if self.surface_kind == "mixture":
            if not self.mixture:
                object.__setattr__(self, "mixture", (("mlp", 1 / 3), ("spline", 1 / 3), ("tree", 1 / 3)))
            w = np.array([wt for _, wt in self.mixture], dtype=float)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ParameterError("mixture weights must be non-negative and sum to 1")
            kinds = [k for k, _ in self.mixture]
        for k in kinds:
            if k not in SURFACE_KINDS:
                raise ParameterError(f"unknown surface kind {k!r}")
            if k in ARMWISE_KINDS and self.treatment_kind != BINARY:
                raise ParameterError(f"{k} surfaces are defined per treatment arm; use binary treatment")

    @property
    def nonlinear(self) -> bool:
        return self.surface_kind in ("mlp", "spline", "tree", "mixture")

    def to_dict(self) -> dict:
        return {
            "structure": self.structure, "treatment_kind": self.treatment_kind,
            "surface_kind": self.surface_kind, "dim": self.dim,
            "priors": {k: {"kind": p.kind, "low": p.low, "high": p.high} for k, p in self.priors.items()},
            "mixture": [[k, w] for k, w in self.mixture],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScmFamily":
        priors = {}
        for k, p in (doc.get("priors") or {}).items():
            if isinstance(p, (int, float)):
                priors[k] = Prior.fixed(p)
            else:
                priors[k] = Prior(p["kind"], float(p.get("low", 0.0)), float(p.get("high", p.get("low", 0.0))))
        return cls(structure=doc.get("structure", "Confounder"),
                   treatment_kind=doc.get("treatment_kind", CONTINUOUS),
                   surface_kind=doc.get("surface_kind", "linear"), dim=int(doc.get("dim", 1)),
                   priors=priors, mixture=tuple((k, float(w)) for k, w in doc.get("mixture", ())))

    def spec_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ScmInstance:
    """One fully parameterised data-generating process."""

    structure: str
    treatment_kind: str
    gamma_x: np.ndarray
    gamma_t: np.ndarray
    beta_x: np.ndarray
    beta_t: float
    beta_y: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    surface: object

    @property
    def dim(self) -> int:
        return len(self.gamma_x)

    def treatment_index(self, x: np.ndarray, u_t: np.ndarray) -> np.ndarray:
        return x @ self.gamma_x + u_t @ self.gamma_t

    def with_surface(self, surface) -> "ScmInstance":
        return replace(self, surface=surface)

    def to_dict(self) -> dict:
        return {"structure": self.structure, "treatment_kind": self.treatment_kind,
                "gamma_x": self.gamma_x.tolist(), "gamma_t": self.gamma_t.tolist(),
                "beta_x": self.beta_x.tolist(), "beta_t": float(self.beta_t),
                "beta_y": self.beta_y.tolist(), "delta1": self.delta1.tolist(),
                "delta2": self.delta2.tolist(), "surface": self.surface.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ScmInstance":
        arr = lambda k: np.asarray(doc[k], dtype=float)  # noqa: E731
        return cls(doc["structure"], doc["treatment_kind"], arr("gamma_x"), arr("gamma_t"), arr("beta_x"),
                   float(doc["beta_t"]), arr("beta_y"), arr("delta1"), arr("delta2"),
                   sf.surface_from_dict(doc["surface"]))


def _sample_surface(kind: str, beta_x: np.ndarray, beta_t: float, d: int, stream: RngStream):
    if kind == "linear":
        return sf.LinearSurface(beta_x, beta_t)
    if kind in ("interaction", "abs_interaction"):
        return sf.InteractionSurface(beta_x, beta_t, absolute=kind == "abs_interaction")
    if kind == "mlp":
        return sf.sample_mlp(d, stream)
    if kind == "spline":
        return sf.sample_spline(d, stream)
    if kind == "tree":
        return sf.sample_tree(d, stream)
    raise ParameterError(f"unknown surface kind {kind!r}")


def sample_scm(family: ScmFamily, stream: RngStream) -> ScmInstance:
    d, pr = family.dim, family.priors
    gamma_x = pr["gamma_x"].sample(stream, d)
    gamma_t = pr["gamma_t"].sample(stream, d)
    beta_x = pr["beta_x"].sample(stream, d)
    beta_t = float(pr["beta_t"].sample(stream, 1)[0])
    beta_y = pr["beta_y"].sample(stream, d)
    delta1 = pr["delta1"].sample(stream, d)
    delta2 = pr["delta2"].sample(stream, d)
    kind = family.surface_kind
    if kind == "mixture":
        kinds = [k for k, _ in family.mixture]
        weights = np.array([w for _, w in family.mixture], dtype=float)
        kind = kinds[int(stream.choice(len(kinds), p=weights / weights.sum()))]
    surface = _sample_surface(kind, beta_x, beta_t, d, stream)
    return ScmInstance(family.structure, family.treatment_kind, gamma_x, gamma_t, beta_x, beta_t,
                       beta_y, delta1, delta2, surface)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z)))


def sample_full_dataset(instance: ScmInstance, n: int, stream: RngStream) -> FullTable:
    if n < 1:
        raise ParameterError("n must be >= 1")
    d = instance.dim
    x = stream.normal(size=(n, d))
    u_t = stream.normal(size=(n, d))
    u_y = stream.normal(size=(n, d))
    w1 = x + instance.delta1 * stream.normal(size=(n, d))
    w2 = x + instance.delta2 * stream.normal(size=(n, d))
    index = instance.treatment_index(x, u_t)
    if instance.treatment_kind == BINARY:
        t = (stream.uniform(0.0, 1.0, n) < sigmoid(index)).astype(float)
    else:
        t = index
    y = intervene_outcome(instance, x, t, u_y)
    return FullTable(x=x, u_t=u_t, u_y=u_y, w1=w1, w2=w2, t=t, y=y)


def intervene_outcome(instance: ScmInstance, x, t_value, u_y) -> np.ndarray:
    """Outcome under do(t = t_value); the treatment equation is never consulted."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u_y = np.atleast_2d(np.asarray(u_y, dtype=float))
    if x.shape[1] != instance.dim:
        raise ParameterError(f"x has dimension {x.shape[1]}, instance has {instance.dim}")
    t = np.broadcast_to(np.asarray(t_value, dtype=float), (x.shape[0],))
    return instance.surface(x, t) + u_y @ instance.beta_y


def sample_observed(family: ScmFamily, n: int, stream: RngStream):
    """Convenience: instance, full table and observed projection in one call."""
    inst = sample_scm(family, stream)
    table = sample_full_dataset(inst, n, stream)
    return inst, table, observe(table, family.structure)


def surface_kinds_of(instances: Sequence[ScmInstance]) -> list[str]:
    return [inst.surface.kind for inst in instances]
