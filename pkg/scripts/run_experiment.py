"""Run simulate, train, evaluate and report for one or more experiment configs.

    python scripts/run_experiment.py configs/confounder_linear.json
    python scripts/run_experiment.py configs/*.json --set train.datasets_per_epoch=3200

Extra ``--set`` overrides are passed to every stage. Stops at the first
non-zero exit code and returns it.
"""

import argparse
import sys
import time

from causalmeta.cli import main as cli

STAGES = ("simulate", "train", "evaluate", "report")


def run(config: str, sets: list[str], stages=STAGES) -> int:
    extra = [a for s in sets for a in ("--set", s)]
    for stage in stages:
        start = time.perf_counter()
        code = cli([stage, "--config", config, *extra])
        print(f"[{config}] {stage}: exit {code} in {time.perf_counter() - start:.0f}s", file=sys.stderr)
        if code:
            return code
    return 0


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("configs", nargs="+")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--stages", nargs="+", default=list(STAGES), choices=STAGES)
    args = p.parse_args()
    for config in args.configs:
        if "decomposition" in config:
            code = cli(["decompose", "--config", config, *[a for s in args.set for a in ("--set", s)]])
        else:
            code = run(config, args.set, args.stages)
        if code:
            sys.exit(code)


if __name__ == "__main__":
    main()
