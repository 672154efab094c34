"""Per-dataset effect estimators: naive contrasts, regression adjustment, 2SLS and proxy 2SLS.

Each ``*Mlp`` variant swaps the relevant regression for a small MLP. MLPs for
many datasets are fitted together as one stacked problem; the loss is a sum
of per-dataset terms and Adam acts elementwise, so every fit is exactly the
fit it would have been alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datasets import CONFOUNDER, CONFOUNDER_IV, INSTRUMENT, PROXY, ObservedDataset
from .errors import CausalMetaError, ContractError, DegenerateError, RankDeficiencyError
from .numerics import autodiff as ad
from .numerics.optim import Adam
from .numerics.params import watch
from .numerics.rng import RngStream

KINDS = ("TOnly", "NaiveDiff", "RegLin", "RegMlp", "TslsLin", "TslsMlp", "Pr2slsLin", "Pr2slsMlp")


@dataclass(frozen=True)
class MlpSettings:
    hidden: tuple = (64, 64)
    steps: int = 2000
    rate: float = 1e-3
    activation: str = "gelu"  # "linear" gives a linear-capacity network
    seed: int = 0


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    mlp: MlpSettings = field(default_factory=MlpSettings)
    allow_binary_tsls: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown baseline {self.kind!r}")

    def check(self, dataset: ObservedDataset) -> None:
        k, blocks = self.kind, dataset.blocks
        if k.startswith("Reg") and "covariate" not in blocks:
            raise ContractError(f"{k} needs covariate columns")
        if k.startswith("Tsls") and "instrument" not in blocks:
            raise ContractError(f"{k} needs an instrument column")
        if k.startswith("Pr2sls") and not {"proxy1", "proxy2"} <= set(blocks):
            raise ContractError(f"{k} needs two proxy columns")
        if k.startswith("Tsls") and _is_binary(dataset.t) and np.unique(dataset.t).size == 2 \
                and not self.allow_binary_tsls:
            raise ContractError("2SLS on a binary treatment is disabled (allow_binary_tsls)")


def _is_binary(t) -> bool:
    return bool(np.all((t == 0) | (t == 1)))


# linear algebra

def ols(design: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients; raises when the design is rank deficient."""
    design = np.asarray(design, float)
    coef, _, rank, sv = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1] or sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficiencyError(f"design of shape {design.shape} has rank {rank}")
    return coef


def _with_intercept(*cols) -> np.ndarray:
    cols = [np.asarray(c, float).reshape(len(cols[0]), -1) for c in cols]
    return np.concatenate([np.ones((len(cols[0]), 1))] + cols, axis=1)


def tsls_closed_form(dataset: ObservedDataset) -> float:
    """cov(y, u_t) / cov(t, u_t) for a scalar instrument."""
    u = dataset.blocks.get("instrument")
    if u is None or u.shape[1] != 1:
        raise ContractError("closed-form 2SLS needs exactly one instrument column")
    u = u[:, 0]
    cov_tu = np.mean((dataset.t - dataset.t.mean()) * (u - u.mean()))
    if abs(cov_tu) < 1e-12:
        raise DegenerateError("instrument and treatment are uncorrelated")
    cov_yu = np.mean((dataset.y - dataset.y.mean()) * (u - u.mean()))
    return float(cov_yu / cov_tu)


def _tsls_second_stage(y, t_hat) -> float:
    spread = np.std(t_hat)
    if spread < 1e-12 * max(1.0, np.abs(t_hat).max()):
        raise DegenerateError("first-stage fit is constant; the instrument is uninformative")
    return float(ols(_with_intercept(t_hat), y)[1])


# stacked MLP regression

class StackedMlp:
    """MLPs fitted jointly on a stack of same-sized regression problems."""

    def __init__(self, settings: MlpSettings):
        self.settings = settings
        self.params = None
        self.stats = None

    def _forward(self, p, X):
        h = ad.as_tensor(X)
        n_layers = len(self.settings.hidden) + 1
        for i in range(n_layers):
            h = h @ p[f"w{i}"] + p[f"b{i}"]
            if i < n_layers - 1 and self.settings.activation == "gelu":
                h = ad.gelu(h)
        return h

    def fit(self, X: np.ndarray, Y: np.ndarray) -> "StackedMlp":
        """``X`` (B, n, p) and ``Y`` (B, n, q); inputs and outputs are z-scored per problem."""
        X, Y = np.asarray(X, float), np.asarray(Y, float)
        if Y.ndim == 2:
            Y = Y[..., None]
        xm, xs = X.mean(axis=1, keepdims=True), X.std(axis=1, keepdims=True)
        ym, ys = Y.mean(axis=1, keepdims=True), Y.std(axis=1, keepdims=True)
        xs = np.where(xs < 1e-12, 1.0, xs)
        ys = np.where(ys < 1e-12, 1.0, ys)
        self.stats = (xm, xs, ym, ys)
        Xz, Yz = (X - xm) / xs, (Y - ym) / ys
        B, n = X.shape[:2]
        widths = (X.shape[2],) + tuple(self.settings.hidden) + (Y.shape[2],)
        stream = RngStream(self.settings.seed, 0x6D6C70)
        params = {}
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(a)
            # every problem in the stack starts from the same seed-fixed weights
            w = stream.uniform(-bound, bound, (a, b))
            params[f"w{i}"] = np.broadcast_to(w, (B, a, b)).copy()
            params[f"b{i}"] = np.zeros((B, 1, b))
        opt = Adam(rate=self.settings.rate)
        for _ in range(self.settings.steps):
            leaves = watch(params)
            diff = self._forward(leaves, Xz) - Yz
            # sum of per-problem mean squared errors keeps problems decoupled
            loss = (diff * diff).sum() * (1.0 / (n * Y.shape[2]))
            params = opt.step(params, ad.backward(loss, leaves))
        self.params = params
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        xm, xs, ym, ys = self.stats
        out = self._forward(self.params, (np.asarray(X, float) - xm) / xs).data
        return out * ys + ym


# estimators

def _reg_design(ds: ObservedDataset, t) -> np.ndarray:
    return np.concatenate([ds.blocks["covariate"], np.asarray(t, float).reshape(-1, 1)], axis=1)


def _contrast_points(ds: ObservedDataset, query=None):
    """Covariate rows and (low, high) treatment values at which to contrast a fitted surface."""
    x = ds.blocks["covariate"]
    if query is not None:
        x = np.broadcast_to(np.atleast_1d(np.asarray(query, float)), x.shape)
    if _is_binary(ds.t):
        return x, np.zeros(ds.n), np.ones(ds.n)
    return x, ds.t, ds.t + 1.0


def _linear_estimate(spec: BaselineSpec, ds: ObservedDataset, query=None) -> float:
    k = spec.kind
    if k in ("TOnly", "NaiveDiff"):
        if _is_binary(ds.t):
            treated, control = ds.y[ds.t == 1], ds.y[ds.t == 0]
            if len(treated) == 0 or len(control) == 0:
                raise DegenerateError("one treatment arm is empty")
            return float(treated.mean() - control.mean())
        return float(ols(_with_intercept(ds.t), ds.y)[1])
    if k == "RegLin":
        return float(ols(_with_intercept(ds.blocks["covariate"], ds.t), ds.y)[-1])
    if k == "TslsLin":
        t_hat = _with_intercept(ds.blocks["instrument"]) @ ols(_with_intercept(ds.blocks["instrument"]), ds.t)
        return _tsls_second_stage(ds.y, t_hat)
    if k == "Pr2slsLin":
        stage1 = _with_intercept(ds.t, ds.blocks["proxy2"])
        w1_hat = stage1 @ ols(stage1, ds.blocks["proxy1"])
        return float(ols(_with_intercept(ds.t, w1_hat), ds.y)[1])
    raise ContractError(f"{k} is not a linear baseline")


def estimate_baseline(spec: BaselineSpec, dataset: ObservedDataset, query=None) -> float:
    spec.check(dataset)
    if spec.kind.endswith("Mlp"):
        est, status = estimate_many(spec, [dataset], None if query is None else [query])
        if status[0] != "ok":
            raise _rebuild_error(status[0])
        return float(est[0])
    return _linear_estimate(spec, dataset, query)


def _rebuild_error(status: str) -> CausalMetaError:
    name, _, msg = status.partition(": ")
    cls = {"RankDeficiencyError": RankDeficiencyError, "DegenerateError": DegenerateError,
           "ContractError": ContractError}.get(name, CausalMetaError)
    return cls(msg)


def estimate_many(spec: BaselineSpec, datasets: Sequence[ObservedDataset],
                  queries: Sequence | None = None) -> tuple[np.ndarray, list[str]]:
    """Estimates for many datasets plus a status string per dataset (``"ok"`` or the error)."""
    out = np.full(len(datasets), np.nan)
    status = ["ok"] * len(datasets)
    if not spec.kind.endswith("Mlp"):
        for i, ds in enumerate(datasets):
            try:
                spec.check(ds)
                out[i] = _linear_estimate(spec, ds, None if queries is None else queries[i])
            except CausalMetaError as err:
                status[i] = f"{type(err).__name__}: {err}"
        return out, status
    groups: dict[int, list[int]] = {}
    for i, ds in enumerate(datasets):
        try:
            spec.check(ds)
            groups.setdefault(ds.n, []).append(i)
        except CausalMetaError as err:
            status[i] = f"{type(err).__name__}: {err}"
    for idx in groups.values():
        batch = [datasets[i] for i in idx]
        qs = None if queries is None else [queries[i] for i in idx]
        vals, stats = _mlp_group(spec, batch, qs)
        out[idx] = vals
        for j, s in zip(idx, stats):
            status[j] = s
    return out, status


def _mlp_group(spec: BaselineSpec, batch: list[ObservedDataset], queries):
    k, settings = spec.kind, spec.mlp
    vals = np.full(len(batch), np.nan)
    stats = ["ok"] * len(batch)
    if k == "RegMlp":
        X = np.stack([_reg_design(ds, ds.t) for ds in batch])
        Y = np.stack([ds.y for ds in batch])
        mlp = StackedMlp(settings).fit(X, Y)
        lo_rows, hi_rows = [], []
        for i, ds in enumerate(batch):
            x, t_lo, t_hi = _contrast_points(ds, None if queries is None else queries[i])
            lo_rows.append(np.concatenate([x, t_lo[:, None]], axis=1))
            hi_rows.append(np.concatenate([x, t_hi[:, None]], axis=1))
        diff = mlp.predict(np.stack(hi_rows)) - mlp.predict(np.stack(lo_rows))
        return diff[..., 0].mean(axis=1), stats
    if k == "TslsMlp":
        X = np.stack([ds.blocks["instrument"] for ds in batch])
        t_hat = StackedMlp(settings).fit(X, np.stack([ds.t for ds in batch])).predict(X)[..., 0]
        for i, ds in enumerate(batch):
            try:
                vals[i] = _tsls_second_stage(ds.y, t_hat[i])
            except CausalMetaError as err:
                stats[i] = f"{type(err).__name__}: {err}"
        return vals, stats
    if k == "Pr2slsMlp":
        X = np.stack([np.concatenate([ds.t[:, None], ds.blocks["proxy2"]], axis=1) for ds in batch])
        W = np.stack([ds.blocks["proxy1"] for ds in batch])
        w1_hat = StackedMlp(settings).fit(X, W).predict(X)
        for i, ds in enumerate(batch):
            try:
                vals[i] = float(ols(_with_intercept(ds.t, w1_hat[i]), ds.y)[1])
            except CausalMetaError as err:
                stats[i] = f"{type(err).__name__}: {err}"
        return vals, stats
    raise ContractError(f"{k} is not an MLP baseline")


DEFAULT_BASELINES = {
    CONFOUNDER: ("TOnly", "RegLin", "RegMlp"),
    INSTRUMENT: ("TOnly", "TslsLin", "TslsMlp"),
    PROXY: ("TOnly", "Pr2slsLin", "Pr2slsMlp"),
    CONFOUNDER_IV: ("TOnly", "RegMlp", "TslsMlp"),
}
