"""Role-tagged tables and their CSV form.

CSV headers encode roles as ``role:name`` (``treatment:t``, ``covariate:x0``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError

CONFOUNDER = "Confounder"
INSTRUMENT = "Instrument"
PROXY = "Proxy"
CONFOUNDER_IV = "ConfounderPlusIv"
STRUCTURES = (CONFOUNDER, INSTRUMENT, PROXY, CONFOUNDER_IV)

# observed roles per structure, in featurisation order after treatment and outcome
STRUCTURE_ROLES = {
    CONFOUNDER: ("covariate",),
    INSTRUMENT: ("instrument",),
    PROXY: ("proxy1", "proxy2"),
    CONFOUNDER_IV: ("covariate", "instrument"),
}
ROLE_PREFIX = {"covariate": "x", "instrument": "ut", "proxy1": "w1_", "proxy2": "w2_",
               "noise": "uy"}


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass
class ObservedDataset:
    """What an estimator sees: treatment, outcome and the structure's observed columns."""

    structure: str
    t: np.ndarray
    y: np.ndarray
    blocks: dict = field(default_factory=dict)  # role -> (N, d) array
    extras: dict = field(default_factory=dict)  # non-featurised columns, e.g. group flags

    def __post_init__(self):
        if self.structure not in STRUCTURE_ROLES:
            raise ContractError(f"unknown structure {self.structure!r}")
        self.t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        self.blocks = {r: np.asarray(v, dtype=np.float64).reshape(len(self.t), -1)
                       for r, v in self.blocks.items()}
        if set(self.blocks) != set(STRUCTURE_ROLES[self.structure]):
            raise ContractError(f"{self.structure} needs roles {STRUCTURE_ROLES[self.structure]}, "
                                f"got {tuple(self.blocks)}")
        if len(self.y) != len(self.t) or len(self.t) < 2:
            raise ContractError("treatment and outcome lengths differ or N < 2")
        for arr in (self.t, self.y, *self.blocks.values()):
            if not np.isfinite(arr).all():
                raise ContractError("dataset contains missing or non-finite values")

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def roles(self) -> tuple[str, ...]:
        return ("treatment", "outcome") + STRUCTURE_ROLES[self.structure]

    def column_names(self) -> list[str]:
        names = ["treatment:t", "outcome:y"]
        for role in STRUCTURE_ROLES[self.structure]:
            names += [f"{role}:{ROLE_PREFIX[role]}{j}" for j in range(self.blocks[role].shape[1])]
        return names

    def feature_matrix(self) -> np.ndarray:
        cols = [self.t[:, None], self.y[:, None]]
        cols += [self.blocks[r] for r in STRUCTURE_ROLES[self.structure]]
        return np.concatenate(cols, axis=1)

    @property
    def width(self) -> int:
        return 2 + sum(b.shape[1] for b in self.blocks.values())

    def take(self, index) -> "ObservedDataset":
        return ObservedDataset(self.structure, self.t[index], self.y[index],
                               {r: b[index] for r, b in self.blocks.items()},
                               {k: np.asarray(v)[index] for k, v in self.extras.items()})

    def with_outcome(self, y) -> "ObservedDataset":
        return ObservedDataset(self.structure, self.t, np.asarray(y), dict(self.blocks), dict(self.extras))

    def to_csv(self, path: str | Path | None = None) -> str:
        header = self.column_names() + [f"group:{k}" for k in self.extras]
        mat = np.concatenate([self.feature_matrix()]
                             + [np.asarray(v, float).reshape(-1, 1) for v in self.extras.values()], axis=1)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([[_fmt(v) for v in row] for row in mat])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text, structure: str | None = None) -> "ObservedDataset":
        text = _read_text(path_or_text)
        header, mat = _parse(text)
        cols: dict[str, list[int]] = {}
        for i, h in enumerate(header):
            role, _, _ = h.partition(":")
            cols.setdefault(role, []).append(i)
        if "treatment" not in cols or "outcome" not in cols:
            raise ContractError("CSV needs treatment: and outcome: columns")
        if len(cols["treatment"]) != 1 or len(cols["outcome"]) != 1:
            raise ContractError("exactly one treatment and one outcome column required")
        roles = set(cols) - {"treatment", "outcome", "group"}
        if structure is None:
            matches = [s for s, r in STRUCTURE_ROLES.items() if set(r) == roles]
            if not matches:
                raise ContractError(f"roles {sorted(roles)} match no structure")
            structure = matches[0]
        blocks = {r: mat[:, cols[r]] for r in STRUCTURE_ROLES[structure]}
        extras = {header[i].partition(":")[2]: mat[:, i] for i in cols.get("group", [])}
        return cls(structure, mat[:, cols["treatment"][0]], mat[:, cols["outcome"][0]], blocks, extras)


@dataclass
class FullTable:
    """Every variable of a simulated dataset, latent ones included."""

    x: np.ndarray
    u_t: np.ndarray
    u_y: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    t: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.t)

    def to_csv(self, path: str | Path | None = None) -> str:
        parts = [("treatment", ["t"], self.t[:, None]), ("outcome", ["y"], self.y[:, None])]
        for role, arr in (("covariate", self.x), ("instrument", self.u_t), ("noise", self.u_y),
                          ("proxy1", self.w1), ("proxy2", self.w2)):
            parts.append((role, [f"{ROLE_PREFIX[role]}{j}" for j in range(arr.shape[1])], arr))
        header = [f"{r}:{n}" for r, names, _ in parts for n in names]
        mat = np.concatenate([a for _, _, a in parts], axis=1)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([[_fmt(v) for v in row] for row in mat])
        if path is not None:
            Path(path).write_text(buf.getvalue())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path_or_text) -> "FullTable":
        header, mat = _parse(_read_text(path_or_text))
        idx: dict[str, list[int]] = {}
        for i, h in enumerate(header):
            idx.setdefault(h.partition(":")[0], []).append(i)
        need = ("treatment", "outcome", "covariate", "instrument", "noise", "proxy1", "proxy2")
        missing = [r for r in need if r not in idx]
        if missing:
            raise ContractError(f"full table is missing latent roles {missing}")
        return cls(x=mat[:, idx["covariate"]], u_t=mat[:, idx["instrument"]], u_y=mat[:, idx["noise"]],
                   w1=mat[:, idx["proxy1"]], w2=mat[:, idx["proxy2"]],
                   t=mat[:, idx["treatment"][0]], y=mat[:, idx["outcome"][0]])


def _read_text(path_or_text) -> str:
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        return Path(path_or_text).read_text()
    return path_or_text


def _parse(text: str) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    mat = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), len(header))
    return header, mat


def observe(table: FullTable, structure: str) -> ObservedDataset:
    """Keep only the columns a structure exposes; the rest stay latent."""
    if structure not in STRUCTURE_ROLES:
        raise ContractError(f"unknown structure {structure!r}")
    source = {"covariate": table.x, "instrument": table.u_t, "proxy1": table.w1, "proxy2": table.w2}
    blocks = {r: source[r].copy() for r in STRUCTURE_ROLES[structure]}
    return ObservedDataset(structure, table.t.copy(), table.y.copy(), blocks)


def audit_roles(dataset: ObservedDataset) -> None:
    """Raise if a dataset carries a column whose role is latent for its structure."""
    allowed = set(STRUCTURE_ROLES[dataset.structure])
    leaked = set(dataset.blocks) - allowed
    if leaked:
        raise ContractError(f"latent roles {sorted(leaked)} exposed for {dataset.structure}")
