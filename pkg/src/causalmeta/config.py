"""Experiment configuration: one JSON document per experiment, overridable from the command line."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import setmodel as sm
from .baselines import DEFAULT_BASELINES, KINDS, MlpSettings
from .databridge import ConditionedFamily, condition_family, load_table
from .errors import CausalMetaError, ConfigError
from .scm import ScmFamily
from .trainer import TrainConfig, input_width


@dataclass
class EvaluationSpec:
    count: int = 1000
    sizes: list = field(default_factory=lambda: [100])
    seed: int = 1
    filter_range: list | None = field(default_factory=lambda: [-2.0, 2.0])
    buckets: bool = False
    edges: list = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.4, 0.7, 1.0])


@dataclass
class DecompositionSpec:
    families: list = field(default_factory=lambda: ["randomized", "confounded"])
    n: int = 6


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    family: dict = field(default_factory=lambda: {"kind": "scm"})
    model: dict = field(default_factory=dict)  # SetModelConfig fields; input_width is derived
    train: dict = field(default_factory=dict)  # TrainConfig fields; seed defaults to the top-level seed
    evaluation: EvaluationSpec = field(default_factory=EvaluationSpec)
    baselines: list | None = None  # None: the structure's default set
    mlp: dict = field(default_factory=dict)
    decomposition: DecompositionSpec = field(default_factory=DecompositionSpec)
    output_dir: str = "runs/experiment"
    report_formats: list = field(default_factory=lambda: ["json", "text"])
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.evaluation, dict):
            self.evaluation = _build(EvaluationSpec, self.evaluation, "evaluation")
        if isinstance(self.decomposition, dict):
            self.decomposition = _build(DecompositionSpec, self.decomposition, "decomposition")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an explicit integer")
        if self.family.get("kind", "scm") not in ("scm", "conditioned"):
            raise ConfigError(f"unknown family kind {self.family.get('kind')!r}")
        if self.baselines is not None:
            bad = [b for b in self.baselines if b not in KINDS]
            if bad:
                raise ConfigError(f"unknown baselines {bad}")
        if self.evaluation.count < 1 or not self.evaluation.sizes:
            raise ConfigError("evaluation needs count >= 1 and at least one size")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    # resolution

    def build_family(self, base_dir: Path | None = None):
        doc = dict(self.family)
        kind = doc.pop("kind", "scm")
        try:
            if kind == "scm":
                return ScmFamily.from_dict(doc)
            return _conditioned(doc, base_dir or Path("."))
        except CausalMetaError:
            raise
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"family spec: {exc}") from None

    def train_config(self) -> TrainConfig:
        doc = {"seed": self.seed, **self.train}
        return _build(TrainConfig, doc, "train")

    def model_config(self, family, estimand: str) -> sm.SetModelConfig:
        doc = {k: v for k, v in self.model.items() if k != "input_width"}
        return _build(sm.SetModelConfig, {"input_width": input_width(family, estimand), **doc}, "model")

    def mlp_settings(self) -> MlpSettings:
        doc = {"seed": self.seed, **self.mlp}
        if "hidden" in doc:
            doc["hidden"] = tuple(doc["hidden"])
        return _build(MlpSettings, doc, "mlp")

    def baseline_kinds(self, structure: str) -> list[str]:
        return list(self.baselines) if self.baselines is not None else list(DEFAULT_BASELINES[structure])

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir")
        doc.pop("workers")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return _build(cls, doc, "experiment")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        cfg = cls.from_dict(doc)
        cfg.family.setdefault("base_dir", str(Path(path).resolve().parent))
        return cfg


def _build(cls, doc: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**doc)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _conditioned(doc: dict, base_dir: Path) -> ConditionedFamily:
    base = Path(doc.pop("base_dir", base_dir))

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    table = load_table(resolve(doc.pop("table")), _schema(doc.pop("schema", None), resolve))
    obs = doc.pop("observational", None)
    if obs is not None:
        doc["observational"] = load_table(resolve(obs), _schema(doc.pop("observational_schema", None), resolve))
    doc.pop("real_outcomes", None)
    return condition_family(table, **doc)


def _schema(value, resolve):
    if value is None or isinstance(value, dict):
        return value
    return resolve(value)


def apply_overrides(config: ExperimentConfig, assignments: list[str]) -> ExperimentConfig:
    """Apply ``dotted.key=json_value`` assignments; the value falls back to a plain string."""
    doc = copy.deepcopy(config.to_dict())
    base_dir = config.family.get("base_dir")
    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = value
    out = ExperimentConfig.from_dict(doc)
    if base_dir is not None:
        out.family.setdefault("base_dir", base_dir)
    return out
