"""Real tables as conditioning sources: ingestion, conditioned families, randomized/observational composition.

Rows of a real table supply (x, t); outcomes are simulated from a freshly
drawn surface, so the effect target is known exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import estimands as est
from .datasets import CONFOUNDER, FullTable, ObservedDataset
from .errors import ContractError, ParameterError
from .numerics.rng import RngStream
from .scm import BINARY, ScmInstance
from .surfaces import ExponentialSurface, LinearSurface, sample_mlp

ROLES = ("covariate", "treatment", "outcome", "group", "ignore")
MISSING = {"", "na", "nan", "null", "none", "?"}
ROWS_AS_IS, BOOTSTRAP, COMPOSE = "rows-as-is", "bootstrap", "compose"
CONDITIONED_SURFACES = ("linear", "ihdp_a", "ihdp_b", "mlp")

# surface A coefficient values and weights; B uses the smaller set
A_VALUES, A_WEIGHTS = (0.0, 1.0, 2.0, 3.0, 4.0), (0.5, 0.2, 0.15, 0.1, 0.05)
B_VALUES, B_WEIGHTS = (0.0, 0.1, 0.2, 0.3, 0.4), (0.6, 0.1, 0.1, 0.1, 0.1)


@dataclass(frozen=True)
class IngestionReport:
    path: str
    rows_read: int
    rows_kept: int
    rows_dropped: int
    dropped_lines: tuple = ()

    def to_json(self) -> dict:
        return {"path": self.path, "rows_read": self.rows_read, "rows_kept": self.rows_kept,
                "rows_dropped": self.rows_dropped, "dropped_lines": list(self.dropped_lines)}


@dataclass(frozen=True)
class RealTable:
    """Immutable role-tagged table. ``x`` holds raw covariates; ``stats`` their (mean, sd)."""

    covariate_names: tuple
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray | None = None
    groups: dict = field(default_factory=dict)
    stats: tuple = ()  # (means, sds)
    report: IngestionReport | None = None

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64, copy=True).reshape(len(self.t), -1)
        t = np.array(self.t, dtype=np.float64, copy=True).reshape(-1)
        if x.shape[1] != len(self.covariate_names):
            raise ContractError("covariate names and columns disagree")
        for arr in (x, t):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)
        if self.y is not None:
            y = np.array(self.y, dtype=np.float64, copy=True).reshape(-1)
            y.setflags(write=False)
            object.__setattr__(self, "y", y)
        if not self.stats:
            sd = x.std(axis=0) if len(x) else np.ones(x.shape[1])
            object.__setattr__(self, "stats", (x.mean(axis=0), np.where(sd > 0, sd, 1.0)))

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def standardized(self, stats: tuple | None = None) -> np.ndarray:
        mean, sd = stats if stats is not None else self.stats
        return (self.x - mean) / sd

    def take(self, index, groups: dict | None = None) -> "RealTable":
        index = np.asarray(index)
        g = {k: np.asarray(v)[index] for k, v in self.groups.items()}
        g.update(groups or {})
        return RealTable(self.covariate_names, self.x[index], self.t[index],
                         None if self.y is None else self.y[index], g, self.stats)

    def is_binary(self) -> bool:
        return bool(np.all((self.t == 0) | (self.t == 1)))


def load_table(path: str | Path, schema: dict | str | Path | None = None, binary_treatment: bool = True) -> RealTable:
    """Read a CSV with a header; ``schema`` maps column names to roles.

    ``schema`` may be a dict, a path to a JSON file, or None to read the
    sidecar ``<path>.schema.json``. The JSON form is ``{"columns": {name: role}}``.
    Rows with a missing cell in any declared column are dropped and counted.
    """
    path = Path(path)
    if schema is None:
        schema = path.with_name(path.name + ".schema.json")
    if isinstance(schema, (str, Path)):
        schema = json.loads(Path(schema).read_text())
    columns = schema.get("columns", schema)
    bad = {r for r in columns.values() if r not in ROLES}
    if bad:
        raise ContractError(f"unknown roles {sorted(bad)}")
    if list(columns.values()).count("treatment") != 1:
        raise ContractError("schema needs exactly one treatment column")
    if list(columns.values()).count("outcome") > 1:
        raise ContractError("schema allows at most one outcome column")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        raw = [row for row in reader if row]
    missing = [c for c in columns if c not in header]
    if missing:
        raise ContractError(f"declared columns missing from {path.name}: {missing}")
    pos = {c: header.index(c) for c, r in columns.items() if r != "ignore"}
    kept, dropped = [], []
    for lineno, row in enumerate(raw, start=2):
        cells = [row[i].strip() if i < len(row) else "" for i in pos.values()]
        if any(c.lower() in MISSING for c in cells):
            dropped.append(lineno)
            continue
        try:
            kept.append([float(c) for c in cells])
        except ValueError as exc:
            raise ContractError(f"{path.name}:{lineno}: non-numeric cell ({exc})") from None
    mat = np.array(kept, dtype=np.float64).reshape(len(kept), len(pos))
    col = {c: mat[:, i] for i, c in enumerate(pos)}
    covs = tuple(c for c, r in columns.items() if r == "covariate")
    treat = next(c for c, r in columns.items() if r == "treatment")
    out = next((c for c, r in columns.items() if r == "outcome"), None)
    report = IngestionReport(str(path), len(raw), len(kept), len(dropped), tuple(dropped))
    x = np.stack([col[c] for c in covs], axis=1) if covs else np.zeros((len(kept), 0))
    table = RealTable(covs, x, col[treat], None if out is None else col[out],
                      {c: col[c] for c, r in columns.items() if r == "group"}, report=report)
    if binary_treatment and not table.is_binary():
        raise ContractError(f"treatment column {treat!r} is not binary")
    return table


def _placeholder_instance(d: int, noise_scale: float, surface) -> ScmInstance:
    # only the surface and the first outcome-noise loading are used downstream
    z = np.zeros(d)
    beta_y = z.copy()
    beta_y[0] = noise_scale
    return ScmInstance(CONFOUNDER, BINARY, z, z.copy(), z.copy(), 0.0, beta_y, z.copy(), z.copy(), surface)


def _discrete(stream: RngStream, values, weights, size) -> np.ndarray:
    return np.asarray(values)[stream.choice(len(values), size=size, p=np.asarray(weights))]


def sample_conditioned_surface(kind: str, x: np.ndarray, t: np.ndarray, stream: RngStream,
                               tau: float = 4.0, target_effect: float = 4.0):
    """Fresh surface over standardised ``x``; data-dependent constants are fitted to these rows."""
    d = x.shape[1]
    if kind == "linear":
        return LinearSurface(stream.uniform(-1, 1, d), float(stream.uniform(-1, 1)))
    if kind == "ihdp_a":
        return LinearSurface(_discrete(stream, A_VALUES, A_WEIGHTS, d), float(tau))
    if kind == "ihdp_b":
        beta = _discrete(stream, B_VALUES, B_WEIGHTS, d)
        ctrl = x[t == 0] if np.any(t == 0) else x
        omega = float(np.mean(ctrl @ beta - np.exp((ctrl + 0.5) @ beta)) - target_effect)
        return ExponentialSurface(beta, omega)
    if kind == "mlp":
        mlp = sample_mlp(d, stream, project=False)
        sd = float(np.std(mlp(x, t)))
        return mlp.scaled(1.0 / sd) if sd > 1e-12 else mlp
    raise ParameterError(f"unknown conditioned surface {kind!r}; choose from {CONDITIONED_SURFACES}")


@dataclass(frozen=True)
class SimulatedOutcome:
    dataset: ObservedDataset
    target: est.EffectTarget
    surface: object


def simulate_outcome(x: np.ndarray, t: np.ndarray, surface, noise_scale: float, stream: RngStream,
                     extras: dict | None = None) -> SimulatedOutcome:
    """y = surface(x, t) + noise; the target is the sample effect of ``surface`` on these rows."""
    n, d = x.shape
    u_y = np.zeros((n, max(d, 1)))
    u_y[:, 0] = stream.normal(size=n)
    inst = _placeholder_instance(max(d, 1), noise_scale, surface)
    y = surface(x, t) + noise_scale * u_y[:, 0]
    table = FullTable(x=x, u_t=np.zeros_like(x), u_y=u_y, w1=x, w2=x, t=t, y=y)
    target = est.sate(inst, table)
    data = ObservedDataset(CONFOUNDER, t, y, {"covariate": x}, dict(extras or {}))
    return SimulatedOutcome(data, target, surface)


@dataclass(frozen=True)
class ComposedSample:
    """A composed table plus the randomized sample it came from."""

    table: RealTable  # group "randomized": 1 for rows kept from the randomized sample
    randomized_sample: RealTable
    source_rows: np.ndarray  # row index into the originating table
    control_source_rows: np.ndarray  # observational pool rows used as controls

    @property
    def reference_effect(self) -> float:
        """Difference of group means in the randomized sample (needs its real outcomes)."""
        s = self.randomized_sample
        if s.y is None:
            raise ContractError("randomized table has no outcome column")
        if not (np.any(s.t == 1) and np.any(s.t == 0)):
            raise ContractError("randomized sample lacks one of the arms")
        return float(s.y[s.t == 1].mean() - s.y[s.t == 0].mean())


def compose_confounded(randomized: RealTable, observational_controls: RealTable, n: int,
                       stream: RngStream, replace: bool = False) -> ComposedSample:
    """Sample ``n`` randomized units, then swap every control for an observational control."""
    if tuple(randomized.covariate_names) != tuple(observational_controls.covariate_names):
        raise ContractError("randomized and observational tables have different covariates")
    if n < 1 or n > randomized.n:
        raise ParameterError(f"cannot sample {n} units from a randomized table of {randomized.n}")
    pool = np.flatnonzero(observational_controls.t == 0)
    rows = np.sort(stream.choice(randomized.n, size=n, replace=False))
    sample = randomized.take(rows)
    treated = sample.t == 1
    n_ctrl = int((~treated).sum())
    if not replace and n_ctrl > len(pool):
        raise ContractError(f"observational pool has {len(pool)} controls, {n_ctrl} needed")
    if n_ctrl and not len(pool):
        raise ContractError("observational pool is empty")
    ctrl = pool[stream.choice(len(pool), size=n_ctrl, replace=replace)] if n_ctrl else np.zeros(0, int)
    x = sample.x.copy()
    t = sample.t.copy()
    y = None if sample.y is None or observational_controls.y is None else sample.y.copy()
    x[~treated] = observational_controls.x[ctrl]
    t[~treated] = 0.0
    if y is not None:
        y[~treated] = observational_controls.y[ctrl]
    flag = treated.astype(float)
    src = rows.copy()
    src[~treated] = ctrl
    table = RealTable(randomized.covariate_names, x, t, y, {"randomized": flag}, randomized.stats)
    return ComposedSample(table, sample, src, ctrl)


@dataclass
class ConditionedFamily:
    """An SCM family whose (x, t) rows come from a real table."""

    table: RealTable
    surface_kind: str = "linear"
    noise_scale: float = 1.0
    mode: str = ROWS_AS_IS
    observational: RealTable | None = None  # control pool for compose mode
    tau: float = 4.0
    target_effect: float = 4.0
    replace_controls: bool = False
    structure: str = CONFOUNDER

    def __post_init__(self):
        if self.mode not in (ROWS_AS_IS, BOOTSTRAP, COMPOSE):
            raise ParameterError(f"unknown resampling mode {self.mode!r}")
        if self.surface_kind not in CONDITIONED_SURFACES:
            raise ParameterError(f"unknown conditioned surface {self.surface_kind!r}")
        if self.noise_scale < 0:
            raise ParameterError("noise_scale must be >= 0")
        if self.mode == COMPOSE and self.observational is None:
            raise ParameterError("compose mode needs an observational control table")
        if not self.table.is_binary():
            raise ContractError("conditioning needs a binary treatment")

    @property
    def dim(self) -> int:
        return self.table.dim

    @property
    def nonlinear(self) -> bool:
        return self.surface_kind in ("ihdp_b", "mlp")

    def to_dict(self) -> dict:
        return {"kind": "conditioned", "surface_kind": self.surface_kind, "noise_scale": self.noise_scale,
                "mode": self.mode, "tau": self.tau, "target_effect": self.target_effect,
                "replace_controls": self.replace_controls, "table_hash": table_hash(self.table),
                "observational_hash": None if self.observational is None else table_hash(self.observational)}

    def spec_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def sample_rows(self, n: int, stream: RngStream) -> tuple[np.ndarray, np.ndarray, dict]:
        """Standardised x, t and provenance columns for one dataset."""
        tab = self.table
        if self.mode == ROWS_AS_IS:
            if n > tab.n:
                raise ParameterError(f"rows-as-is mode cannot give {n} rows from a table of {tab.n}")
            idx = np.arange(n)
            return tab.standardized()[idx], tab.t[idx].copy(), {"source_row": idx.astype(float)}
        if self.mode == BOOTSTRAP:
            idx = stream.integers(0, tab.n, n)
            return tab.standardized()[idx], tab.t[idx].copy(), {"source_row": idx.astype(float)}
        comp = compose_confounded(tab, self.observational, n, stream, self.replace_controls)
        return (comp.table.standardized(), comp.table.t.copy(),
                {"randomized": comp.table.groups["randomized"], "source_row": comp.source_rows.astype(float)})

    def sample_dataset(self, n: int, stream: RngStream) -> SimulatedOutcome:
        x, t, extras = self.sample_rows(n, stream.child(0))
        surf = sample_conditioned_surface(self.surface_kind, x, t, stream.child(1), self.tau, self.target_effect)
        return simulate_outcome(x, t, surf, self.noise_scale, stream.child(2), extras)

    def sample_training_item(self, config, stream: RngStream):
        from .trainer import TrainingItem, wants_normalization

        if config.estimand != est.SATE:
            raise ContractError("conditioned families provide SATE targets only")
        sim = self.sample_dataset(config.dataset_size, stream)
        target = sim.target
        if wants_normalization(self, config):
            target = est.with_normalizer(target, sim.dataset.y)
        return TrainingItem(sim.dataset, target, None, {"surface": sim.surface.kind})


def condition_family(table: RealTable, surface_kind: str = "linear", noise_scale: float = 1.0,
                     mode: str = ROWS_AS_IS, **kwargs) -> ConditionedFamily:
    return ConditionedFamily(table, surface_kind, noise_scale, mode, **kwargs)


def table_hash(table: RealTable) -> str:
    h = hashlib.sha256()
    for arr in (table.x, table.t) + (() if table.y is None else (table.y,)):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(json.dumps(list(table.covariate_names)).encode())
    return h.hexdigest()[:16]


def xt_block_bytes(dataset: ObservedDataset) -> bytes:
    """Serialized (x, t) block; used for byte-level audits across outcome variants."""
    return np.ascontiguousarray(np.column_stack([dataset.t, dataset.blocks["covariate"]])).tobytes()


@dataclass(frozen=True)
class EvaluationPair:
    """One composed dataset in its simulated-outcome and real-outcome variants."""

    simulated: SimulatedOutcome
    real: ObservedDataset
    reference_effect: float


@dataclass
class SemisyntheticCorpora:
    n: int
    training: list  # SimulatedOutcome
    evaluation: list  # EvaluationPair
    seed: int
    rule: str

    def manifest(self) -> dict:
        h = hashlib.sha256()
        for s in self.training:
            h.update(s.dataset.to_csv().encode())
        for p in self.evaluation:
            h.update(p.real.to_csv().encode())
        return {"seed": self.seed, "rule": self.rule, "n": self.n, "training": len(self.training),
                "evaluation": len(self.evaluation), "provenance_hash": h.hexdigest()}


def semisynthetic_train_eval_split(family: ConditionedFamily, n: int, train_count: int, eval_count: int,
                                   stream: RngStream, real_outcomes: bool = True) -> SemisyntheticCorpora:
    """Training datasets with simulated outcomes; evaluation datasets carrying real outcomes.

    Each evaluation composition is also emitted with simulated outcomes on the
    identical (x, t) rows so the two variants can be audited against each other.
    """
    if family.mode != COMPOSE:
        raise ParameterError("the semi-synthetic split needs a compose-mode family")
    training = [family.sample_dataset(n, stream.child(0, i)) for i in range(train_count)]
    evaluation = []
    for i in range(eval_count):
        s = stream.child(1, i)
        comp = compose_confounded(family.table, family.observational, n, s.child(0), family.replace_controls)
        x, t = comp.table.standardized(), comp.table.t
        extras = {"randomized": comp.table.groups["randomized"], "source_row": comp.source_rows.astype(float)}
        surf = sample_conditioned_surface(family.surface_kind, x, t, s.child(1), family.tau, family.target_effect)
        sim = simulate_outcome(x, t, surf, family.noise_scale, s.child(2), extras)
        if real_outcomes:
            real = sim.dataset.with_outcome(comp.table.y)
            ref = comp.reference_effect
        else:
            real, ref = sim.dataset, sim.target.value
        evaluation.append(EvaluationPair(sim, real, ref))
    return SemisyntheticCorpora(n, training, evaluation, int(stream.seed), f"compose:{family.surface_kind}")


def write_corpus(directory: str | Path, datasets: Sequence[ObservedDataset], targets: Sequence[float],
                 seed: int, rule: str, extra: dict | None = None) -> dict:
    """CSV per dataset plus ``manifest.json`` with a provenance hash over the files."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    h = hashlib.sha256()
    names = []
    for i, ds in enumerate(datasets):
        name = f"dataset_{i:05d}.csv"
        text = ds.to_csv(out / name)
        h.update(text.encode())
        names.append(name)
    targets = [float(v) for v in targets]
    h.update(json.dumps(targets).encode())
    manifest = {"seed": seed, "rule": rule, "files": names, "targets": targets,
                "provenance_hash": h.hexdigest(), **(extra or {})}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def write_semisynthetic(directory: str | Path, corpora: SemisyntheticCorpora) -> dict:
    base = Path(directory)
    tr = write_corpus(base / "train", [s.dataset for s in corpora.training],
                      [s.target.value for s in corpora.training], corpora.seed, corpora.rule)
    ev = write_corpus(base / "eval", [p.real for p in corpora.evaluation],
                      [p.reference_effect for p in corpora.evaluation], corpora.seed, corpora.rule + ":real")
    top = {**corpora.manifest(), "train_hash": tr["provenance_hash"], "eval_hash": ev["provenance_hash"]}
    (base / "manifest.json").write_text(json.dumps(top, indent=2, sort_keys=True) + "\n")
    return top
