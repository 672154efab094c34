"""Write a LaLonde-shaped pair of tables for trying the data bridge without the real files.

A randomized table (445 units, about 42% treated) and a larger pool of
observational controls whose covariates are shifted, each with a
``.schema.json`` sidecar. Replace them with the real study files (same
column roles) for actual experiments.
"""

import argparse
import csv
import json
from pathlib import Path

import numpy as np

COLUMNS = ["age", "educ", "black", "hisp", "married", "nodegree", "re74", "re75"]


def _units(rng, n, treated_share, shift):
    age = np.clip(rng.normal(25 + 8 * shift, 7, n), 17, 55).round()
    educ = np.clip(rng.normal(10 + 2 * shift, 2, n), 3, 16).round()
    black = (rng.uniform(size=n) < 0.8 - 0.55 * shift).astype(int)
    hisp = ((rng.uniform(size=n) < 0.1) & (black == 0)).astype(int)
    married = (rng.uniform(size=n) < 0.17 + 0.6 * shift).astype(int)
    nodegree = (educ < 12).astype(int)
    re74 = np.maximum(0, rng.normal(2000 + 12000 * shift, 5000, n)).round(2)
    re75 = np.maximum(0, 0.8 * re74 + rng.normal(500, 2000, n)).round(2)
    t = (rng.uniform(size=n) < treated_share).astype(int)
    re78 = np.maximum(0, 0.5 * re75 + 300 * educ + 1800 * t + rng.normal(3000, 5000, n)).round(2)
    return np.column_stack([age, educ, black, hisp, married, nodegree, re74, re75, t, re78])


def write(path: Path, mat):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS + ["treat", "re78"])
        w.writerows(mat.tolist())
    roles = {c: "covariate" for c in COLUMNS} | {"treat": "treatment", "re78": "outcome"}
    path.with_name(path.name + ".schema.json").write_text(json.dumps({"columns": roles}, indent=2) + "\n")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/demo_data"))
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    rng = np.random.default_rng(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    write(args.out / "randomized.csv", _units(rng, 445, 185 / 445, 0.0))
    write(args.out / "observational.csv", _units(rng, 2490, 0.0, 1.0))
    print(f"wrote {args.out}/randomized.csv and observational.csv")


if __name__ == "__main__":
    main()
