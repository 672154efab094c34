"""Outcome response surfaces ``f(x, t)``.

Each surface evaluates on ``x`` shaped (n, d) and ``t`` shaped (n,). The
random nonlinear surfaces act on a scalar projection ``x @ projection``; for
d = 1 the projection is ``[1.0]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline, make_interp_spline

from .errors import ParameterError
from .numerics.rng import RngStream

KNOT_RANGE = 8.0
NUM_KNOTS = 8
TREE_DEPTH = 5
TREE_POINTS = 64
MLP_HIDDEN = 10
LEAKY_SLOPE = 0.01


def _leaky(z, slope):
    return np.where(z > 0, z, slope * z)


def _arm_index(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t)
    if not np.all((t == 0) | (t == 1)):
        raise ParameterError("arm-wise surfaces need a binary treatment in {0, 1}")
    return t.astype(int)


@dataclass(frozen=True)
class LinearSurface:
    beta_x: np.ndarray
    beta_t: float
    kind = "linear"

    def __call__(self, x, t):
        return np.asarray(x) @ self.beta_x + self.beta_t * np.asarray(t)

    def to_dict(self):
        return {"kind": self.kind, "beta_x": np.asarray(self.beta_x).tolist(), "beta_t": float(self.beta_t)}


@dataclass(frozen=True)
class InteractionSurface:
    """``beta_x . x * t + beta_t * t``, or with ``|x|`` when ``absolute``."""

    beta_x: np.ndarray
    beta_t: float
    absolute: bool = False

    @property
    def kind(self):
        return "abs_interaction" if self.absolute else "interaction"

    def __call__(self, x, t):
        x = np.abs(x) if self.absolute else np.asarray(x)
        return (x @ self.beta_x) * np.asarray(t) + self.beta_t * np.asarray(t)

    def to_dict(self):
        return {"kind": self.kind, "beta_x": np.asarray(self.beta_x).tolist(),
                "beta_t": float(self.beta_t)}


@dataclass(frozen=True)
class MlpSurface:
    """Two-layer leaky-ReLU network on ``(x @ projection, t)``, or on ``(x, t)`` without a projection."""

    w1: np.ndarray  # (inputs, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden,)
    b2: float
    projection: np.ndarray | None
    slope: float = LEAKY_SLOPE
    scale: float = 1.0
    kind = "mlp"

    def __call__(self, x, t):
        x = np.asarray(x)
        lead = x @ self.projection if self.projection is not None else x
        z = np.concatenate([lead.reshape(len(x), -1), np.asarray(t, dtype=float).reshape(-1, 1)], axis=1)
        return self.scale * (_leaky(z @ self.w1 + self.b1, self.slope) @ self.w2 + self.b2)

    def scaled(self, factor: float) -> "MlpSurface":
        return MlpSurface(self.w1, self.b1, self.w2, self.b2, self.projection, self.slope, self.scale * factor)

    def to_dict(self):
        return {"kind": self.kind, "w1": self.w1.tolist(), "b1": self.b1.tolist(),
                "w2": self.w2.tolist(), "b2": float(self.b2),
                "projection": None if self.projection is None else self.projection.tolist(),
                "slope": self.slope, "scale": self.scale}


@dataclass(frozen=True)
class ExponentialSurface:
    """Control arm ``exp((x + 0.5) . beta)``, treated arm ``x . beta - omega``."""

    beta: np.ndarray
    omega: float
    kind = "exponential"

    def __call__(self, x, t):
        x = np.asarray(x)
        t = np.asarray(t, dtype=float)
        return t * (x @ self.beta - self.omega) + (1.0 - t) * np.exp((x + 0.5) @ self.beta)

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta.tolist(), "omega": float(self.omega)}


@dataclass(frozen=True)
class SplineSurface:
    """Per-arm quadratic interpolating splines over ``[-8, 8]``; inputs are clamped."""

    knots: tuple  # per arm: (abscissae, ordinates)
    splines: tuple  # per arm: (knot vector, coefficients, degree)
    projection: np.ndarray
    kind = "spline"

    def __call__(self, x, t):
        s = np.clip(np.asarray(x) @ self.projection, -KNOT_RANGE, KNOT_RANGE)
        arm = _arm_index(t)
        out = np.empty(s.shape)
        for a, (kv, coef, k) in enumerate(self.splines):
            sel = arm == a
            if np.any(sel):
                out[sel] = BSpline(kv, coef, k, extrapolate=True)(s[sel])
        return out

    def to_dict(self):
        return {"kind": self.kind,
                "knots": [[np.asarray(a).tolist(), np.asarray(b).tolist()] for a, b in self.knots],
                "splines": [[np.asarray(kv).tolist(), np.asarray(c).tolist(), int(k)]
                            for kv, c, k in self.splines],
                "projection": self.projection.tolist()}


@dataclass(frozen=True)
class RegressionTree:
    """Binary regression tree on a scalar input; node 0 is the root, ``left < 0`` marks a leaf."""

    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def leaf_of(self, s: np.ndarray) -> np.ndarray:
        node = np.zeros(np.shape(s), dtype=int)
        for _ in range(len(self.threshold)):
            inner = self.left[node] >= 0
            if not inner.any():
                break
            go_left = s <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)
        return node

    def __call__(self, s):
        return self.value[self.leaf_of(np.asarray(s, dtype=float))]

    @classmethod
    def constant(cls, c: float) -> "RegressionTree":
        return cls(np.array([0.0]), np.array([-1]), np.array([-1]), np.array([float(c)]))

    @classmethod
    def fit(cls, s: np.ndarray, y: np.ndarray, max_depth: int = TREE_DEPTH) -> "RegressionTree":
        """Greedy least-squares CART; splits at midpoints between sorted inputs."""
        threshold, left, right, value = [], [], [], []

        def grow(idx, depth):
            node = len(value)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(np.mean(y[idx])))
            if depth >= max_depth or len(idx) < 2:
                return node
            order = idx[np.argsort(s[idx], kind="stable")]
            xs, ys = s[order], y[order]
            csum, csq = np.cumsum(ys), np.cumsum(ys * ys)
            n = len(ys)
            k = np.arange(1, n)
            sse_l = csq[:-1] - csum[:-1] ** 2 / k
            sse_r = (csq[-1] - csq[:-1]) - (csum[-1] - csum[:-1]) ** 2 / (n - k)
            sse = sse_l + sse_r
            sse[xs[1:] == xs[:-1]] = np.inf
            best = int(np.argmin(sse))
            if not np.isfinite(sse[best]) or sse[best] >= csq[-1] - csum[-1] ** 2 / n - 1e-12:
                return node
            threshold[node] = 0.5 * (xs[best] + xs[best + 1])
            left[node] = grow(order[:best + 1], depth + 1)
            right[node] = grow(order[best + 1:], depth + 1)
            return node

        grow(np.arange(len(s)), 0)
        return cls(np.array(threshold), np.array(left), np.array(right), np.array(value))

    def to_dict(self):
        return {"threshold": self.threshold.tolist(), "left": self.left.tolist(),
                "right": self.right.tolist(), "value": self.value.tolist()}


@dataclass(frozen=True)
class TreeSurface:
    trees: tuple  # one RegressionTree per arm
    projection: np.ndarray
    kind = "tree"

    def __call__(self, x, t):
        s = np.asarray(x) @ self.projection
        arm = _arm_index(t)
        out = np.empty(s.shape)
        for a, tree in enumerate(self.trees):
            sel = arm == a
            if np.any(sel):
                out[sel] = tree(s[sel])
        return out

    def to_dict(self):
        return {"kind": self.kind, "trees": [tr.to_dict() for tr in self.trees],
                "projection": self.projection.tolist()}


def random_projection(d: int, stream: RngStream) -> np.ndarray:
    if d == 1:
        return np.ones(1)
    v = stream.normal(size=d)
    return v / np.linalg.norm(v)


def sample_mlp(d: int, stream: RngStream, project: bool = True) -> MlpSurface:
    proj = random_projection(d, stream) if project else None
    inputs = 2 if project else d + 1
    return MlpSurface(w1=stream.uniform(-1, 1, (inputs, MLP_HIDDEN)), b1=stream.uniform(-1, 1, MLP_HIDDEN),
                      w2=stream.uniform(-1, 1, MLP_HIDDEN), b2=float(stream.uniform(-1, 1)),
                      projection=proj)


def sample_spline(d: int, stream: RngStream) -> SplineSurface:
    proj = random_projection(d, stream)
    knots, splines = [], []
    for _ in range(2):
        a = np.sort(stream.uniform(-KNOT_RANGE, KNOT_RANGE, NUM_KNOTS))
        b = stream.uniform(-KNOT_RANGE, KNOT_RANGE, NUM_KNOTS)
        spl = make_interp_spline(a, b, k=2)
        knots.append((a, b))
        splines.append((np.asarray(spl.t), np.asarray(spl.c), int(spl.k)))
    return SplineSurface(tuple(knots), tuple(splines), proj)


def sample_tree(d: int, stream: RngStream) -> TreeSurface:
    proj = random_projection(d, stream)
    trees = []
    for _ in range(2):
        s = stream.uniform(-KNOT_RANGE, KNOT_RANGE, TREE_POINTS)
        y = stream.uniform(-KNOT_RANGE, KNOT_RANGE, TREE_POINTS)
        trees.append(RegressionTree.fit(s, y))
    return TreeSurface(tuple(trees), proj)


def surface_from_dict(doc: dict):
    kind = doc["kind"]
    if kind == "linear":
        return LinearSurface(np.asarray(doc["beta_x"], float), float(doc["beta_t"]))
    if kind in ("interaction", "abs_interaction"):
        return InteractionSurface(np.asarray(doc["beta_x"], float), float(doc["beta_t"]),
                                  absolute=kind == "abs_interaction")
    if kind == "mlp":
        proj = doc.get("projection")
        return MlpSurface(np.asarray(doc["w1"]), np.asarray(doc["b1"]), np.asarray(doc["w2"]),
                          float(doc["b2"]), None if proj is None else np.asarray(proj),
                          doc.get("slope", LEAKY_SLOPE), float(doc.get("scale", 1.0)))
    if kind == "exponential":
        return ExponentialSurface(np.asarray(doc["beta"], float), float(doc["omega"]))
    if kind == "spline":
        return SplineSurface(tuple((np.asarray(a), np.asarray(b)) for a, b in doc["knots"]),
                             tuple((np.asarray(kv), np.asarray(c), int(k)) for kv, c, k in doc["splines"]),
                             np.asarray(doc["projection"]))
    if kind == "tree":
        trees = tuple(RegressionTree(np.asarray(t["threshold"], float), np.asarray(t["left"], int),
                                     np.asarray(t["right"], int), np.asarray(t["value"], float))
                      for t in doc["trees"])
        return TreeSurface(trees, np.asarray(doc["projection"]))
    raise ParameterError(f"unknown surface kind {kind!r}")
