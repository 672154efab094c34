"""Metrics, instrument-strength breakdowns and error-decomposition diagnostics."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from . import estimands as est
from .errors import ContractError, DegenerateError, ParameterError
from .numerics.rng import RngStream
from .scm import ScmInstance

DEFAULT_FILTER = (-2.0, 2.0)
DEFAULT_EDGES = (0.0, 0.1, 0.2, 0.4, 0.7, 1.0)


class UndefinedR2Error(DegenerateError):
    """Truth values have zero variance; ``rmse`` is still available on the exception."""

    def __init__(self, message: str, rmse: float):
        super().__init__(message)
        self.rmse = rmse


@dataclass
class MetricsReport:
    r2: float | None
    rmse: float
    n_total: int
    r2_filtered: float | None = None
    rmse_filtered: float | None = None
    n_filtered: int | None = None
    buckets: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["buckets"] = {k: (v.to_json() if isinstance(v, MetricsReport) else v)
                          for k, v in self.buckets.items()}
        return doc


def r_squared(pred: np.ndarray, truth: np.ndarray) -> float:
    ss_res = float(np.sum((truth - pred) ** 2))
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot <= 0.0:
        raise UndefinedR2Error("truth values have zero variance", math.sqrt(ss_res / len(truth)))
    return 1.0 - ss_res / ss_tot


def compute_metrics(predictions, truths, filter_range: tuple[float, float] | None = DEFAULT_FILTER,
                    strict: bool = True) -> MetricsReport:
    """R^2 about the truth mean and RMSE, plus the same after dropping out-of-range predictions.

    With ``strict`` a zero-variance truth vector raises :class:`UndefinedR2Error`;
    otherwise R^2 is reported as ``None``.
    """
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(truths, dtype=float)
    if p.shape != y.shape or p.ndim != 1 or len(p) < 2:
        raise ParameterError("predictions and truths must be equal-length vectors with >= 2 entries")
    rmse = float(np.sqrt(np.mean((p - y) ** 2)))
    try:
        r2 = r_squared(p, y)
    except UndefinedR2Error:
        if strict:
            raise
        r2 = None
    report = MetricsReport(r2=r2, rmse=rmse, n_total=len(p))
    if filter_range is not None:
        keep = (p >= filter_range[0]) & (p <= filter_range[1])
        report.n_filtered = int(keep.sum())
        if keep.sum() >= 2:
            report.rmse_filtered = float(np.sqrt(np.mean((p[keep] - y[keep]) ** 2)))
            try:
                report.r2_filtered = r_squared(p[keep], y[keep])
            except UndefinedR2Error:
                report.r2_filtered = None
    return report


def format_r2(r2: float | None) -> str:
    if r2 is None:
        return "n/a"
    return "≤ 0" if r2 <= 0 else f"{r2:.4f}"


def render_table(rows: Sequence[Mapping], sizes: Sequence[int]) -> str:
    """Aligned text table with columns Setting, Model, R² and RMSE per dataset size.

    ``rows`` entries carry ``setting``, ``model`` and ``reports`` (size -> MetricsReport or dict).
    """
    header = ["Setting", "Model"] + [f"R² N={n}" for n in sizes] + [f"RMSE N={n}" for n in sizes]
    body = []
    for row in rows:
        reps = row["reports"]

        def get(n, key):
            rep = reps.get(n) if n in reps else reps.get(str(n))
            if rep is None:
                return None
            return getattr(rep, key) if isinstance(rep, MetricsReport) else rep.get(key)

        cells = [row["setting"], row["model"]]
        cells += [format_r2(get(n, "r2")) if get(n, "rmse") is not None else "-" for n in sizes]
        cells += [f"{get(n, 'rmse'):.4f}" if get(n, "rmse") is not None else "-" for n in sizes]
        body.append(cells)
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# instrument strength

def analytic_strength(instance: ScmInstance) -> float:
    """|corr(t, u_t)| implied by the linear treatment equation with standard normal inputs."""
    gx, gt = np.asarray(instance.gamma_x), np.asarray(instance.gamma_t)
    denom = math.sqrt(float(gx @ gx + gt @ gt))
    return 0.0 if denom == 0 else float(np.linalg.norm(gt) / denom)


def empirical_strength(t, u_t) -> float:
    u = np.asarray(u_t, float).reshape(len(t), -1)[:, 0]
    return float(abs(np.corrcoef(t, u)[0, 1]))


def bucket_labels(strengths, edges=DEFAULT_EDGES) -> list[str]:
    labels = []
    for s in strengths:
        i = int(np.searchsorted(edges, s, side="right")) - 1
        i = min(max(i, 0), len(edges) - 2)
        labels.append(f"[{edges[i]:g}, {edges[i + 1]:g})")
    return labels


def strength_buckets(strengths, truths, estimates: Mapping[str, Sequence[float]],
                     edges=DEFAULT_EDGES, filter_range=None) -> dict:
    """Per-bucket, per-method metrics; buckets with fewer than two datasets are flagged and omitted."""
    strengths = np.asarray(strengths, float)
    truths = np.asarray(truths, float)
    labels = np.array(bucket_labels(strengths, edges))
    out: dict = {"buckets": {}, "omitted": []}
    for lo, hi in zip(edges[:-1], edges[1:]):
        label = f"[{lo:g}, {hi:g})"
        sel = labels == label
        if sel.sum() < 2:
            out["omitted"].append(label)
            continue
        out["buckets"][label] = {
            "count": int(sel.sum()),
            "methods": {m: compute_metrics(np.asarray(v, float)[sel], truths[sel], filter_range, strict=False)
                        for m, v in estimates.items()},
        }
    return out


# Monte-Carlo target error

def mc_error_term(instance: ScmInstance, K: int, repetitions: int, stream: RngStream) -> float:
    """Variance of the K-sample PATE estimate across independent repetitions."""
    if repetitions < 30:
        raise ParameterError("repetitions must be >= 30")
    values = [est.pate(instance, K, stream.child(r)).value for r in range(repetitions)]
    return float(np.var(values, ddof=1))


# exact decomposition on enumerable families

@dataclass(frozen=True)
class EnumerableFamily:
    """Finitely many SCM parameterisations over a finite row alphabet.

    ``row_laws[j]`` is the observational law of one row under parameterisation
    ``j``; ``effects[j]`` its true estimand. The training target is the true
    effect minus an independent zero-mean discrete noise (values/probs).
    """

    priors: tuple
    row_laws: tuple  # tuple of tuples, one law per parameterisation
    effects: tuple
    noise_values: tuple = (0.0,)
    noise_probs: tuple = (1.0,)
    name: str = "toy"

    def __post_init__(self):
        p = np.asarray(self.priors, float)
        laws = np.asarray(self.row_laws, float)
        if p.ndim != 1 or laws.shape[0] != len(p) or len(self.effects) != len(p):
            raise ContractError("priors, row laws and effects must align")
        if abs(p.sum() - 1) > 1e-12 or np.any(p < 0):
            raise ContractError("priors must be a probability vector")
        if np.any(np.abs(laws.sum(axis=1) - 1) > 1e-12) or np.any(laws < 0):
            raise ContractError("row laws must be probability vectors")
        nv, npb = np.asarray(self.noise_values, float), np.asarray(self.noise_probs, float)
        if abs(npb.sum() - 1) > 1e-12 or abs(float(nv @ npb)) > 1e-12:
            raise ContractError("target noise must be a zero-mean probability law")

    @property
    def alphabet_size(self) -> int:
        return len(self.row_laws[0])

    def law_classes(self) -> np.ndarray:
        """Index of the observational-law class of each parameterisation."""
        keys: dict[tuple, int] = {}
        return np.array([keys.setdefault(tuple(np.round(law, 12)), len(keys)) for law in self.row_laws])


@dataclass
class DecompositionReport:
    total: float
    term_a: float
    term_b: float
    term_c: float
    term_d: float
    residual: float
    eps_variance: float

    def to_json(self) -> dict:
        return asdict(self)


def count_vectors(n: int, k: int):
    """All length-k non-negative integer vectors summing to n."""
    for cut in itertools.combinations(range(n + k - 1), k - 1):
        prev, counts = -1, []
        for c in cut + (n + k - 1,):
            counts.append(c - prev - 1)
            prev = c
        yield tuple(counts)


def _log_multinomial(counts) -> float:
    n = sum(counts)
    return math.lgamma(n + 1) - sum(math.lgamma(c + 1) for c in counts)


def dataset_likelihoods(family: EnumerableFamily, n: int) -> tuple[list[tuple], np.ndarray]:
    """All count vectors for N = n and their probabilities under each parameterisation."""
    laws = np.asarray(family.row_laws, float)
    datasets = list(count_vectors(n, family.alphabet_size))
    lik = np.zeros((len(datasets), len(laws)))
    for i, c in enumerate(datasets):
        coef = math.exp(_log_multinomial(c))
        lik[i] = coef * np.prod(laws ** np.asarray(c, float), axis=1)
    return datasets, lik


def exact_decomposition(family: EnumerableFamily, n: int,
                        predictor: Callable[[tuple], float] | Mapping[Hashable, float]) -> DecompositionReport:
    """Enumerate every (parameterisation, dataset, target-noise) triple and split the training MSE.

    Datasets are represented by their count vectors, the sufficient statistic
    for i.i.d. rows over a finite alphabet; the infinite-data limit is the
    row law itself, so parameterisations with equal laws share one class.
    """
    if not isinstance(family, EnumerableFamily):
        raise ContractError("exact decomposition needs an enumerable family")
    if n < 1:
        raise ParameterError("n must be >= 1")
    prior = np.asarray(family.priors, float)
    phi = np.asarray(family.effects, float)
    eps = np.asarray(family.noise_values, float)
    eps_p = np.asarray(family.noise_probs, float)
    datasets, lik = dataset_likelihoods(family, n)
    f = np.array([predictor(c) if callable(predictor) else predictor[c] for c in datasets], float)

    joint = lik * prior  # P(D, theta)
    p_data = joint.sum(axis=1)
    post_n = np.divide(joint @ phi, p_data, out=np.zeros_like(p_data), where=p_data > 0)
    classes = family.law_classes()
    post_inf = np.empty_like(phi)
    for c in np.unique(classes):
        sel = classes == c
        post_inf[sel] = (prior[sel] @ phi[sel]) / prior[sel].sum()

    # training target is phi - eps with eps independent of (theta, D)
    resid = phi[None, :, None] - eps[None, None, :] - f[:, None, None]
    total = float(np.einsum("dt,dte,e->", joint, resid ** 2, eps_p))
    term_a = float(eps_p @ eps ** 2)
    term_b = float(p_data @ (f - post_n) ** 2)
    term_c = float(prior @ (phi - post_inf) ** 2)
    term_d = float(np.sum(joint * (post_inf[None, :] - post_n[:, None]) ** 2))
    residual = total - (term_a + term_b + term_c + term_d)
    return DecompositionReport(total, term_a, term_b, term_c, term_d, residual, term_a)


def posterior_mean_predictor(family: EnumerableFamily, n: int) -> dict:
    """The optimal finite-data predictor E[effect | D_N] as a lookup table."""
    datasets, lik = dataset_likelihoods(family, n)
    joint = lik * np.asarray(family.priors, float)
    post = (joint @ np.asarray(family.effects, float)) / joint.sum(axis=1)
    return dict(zip(datasets, post))


def randomized_binary_family(levels=(0.2, 0.5, 0.8), noise=(-0.05, 0.05)) -> EnumerableFamily:
    """Identifiable toy family: t ~ Bern(1/2) randomised, y | t ~ Bern(p_t); effect p_1 - p_0.

    Row alphabet is (t, y) in order (0,0), (0,1), (1,0), (1,1).
    """
    params = list(itertools.product(levels, levels))
    laws = tuple((0.5 * (1 - p0), 0.5 * p0, 0.5 * (1 - p1), 0.5 * p1) for p0, p1 in params)
    effects = tuple(p1 - p0 for p0, p1 in params)
    prior = tuple([1.0 / len(params)] * len(params))
    return EnumerableFamily(prior, laws, effects, noise, (0.5, 0.5), name="randomized")


def confounded_binary_family(noise=(-0.05, 0.05)) -> EnumerableFamily:
    """Non-identifiable toy family: a hidden fair coin u sets t = u and shifts y.

    y | t, u ~ Bern(alpha + beta t + gamma u) with effect beta. Pairs of
    parameterisations trade beta for gamma and share one observational law.
    """
    params = [(0.3, 0.4, 0.0), (0.3, 0.0, 0.4), (0.2, 0.2, 0.0), (0.2, 0.1, 0.1), (0.5, -0.2, 0.0)]
    laws, effects = [], []
    for a, b, g in params:
        p0, p1 = a, a + b + g  # t = u, so t = 1 implies u = 1
        laws.append((0.5 * (1 - p0), 0.5 * p0, 0.5 * (1 - p1), 0.5 * p1))
        effects.append(b)
    prior = tuple([1.0 / len(params)] * len(params))
    return EnumerableFamily(prior, tuple(laws), tuple(effects), noise, (0.5, 0.5), name="confounded")


def save_json(path, doc) -> None:
    from pathlib import Path

    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))
