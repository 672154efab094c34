"""Command-line entry points: simulate, train, evaluate, baselines, decompose, report.

Exit codes: 0 success, 2 configuration error, 3 numeric divergence,
4 data-contract error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .baselines import BaselineSpec, estimate_many
from .config import ExperimentConfig, apply_overrides
from .databridge import COMPOSE, ConditionedFamily, semisynthetic_train_eval_split, write_semisynthetic
from .datasets import INSTRUMENT, ObservedDataset
from .errors import ConfigError, ContractError, DegenerateError, NumericError, ParameterError
from .numerics.rng import RngStream
from .trainer import TrainConfig, TrainedModel, predict_many, sample_item, train, write_curve

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CONTRACT = 0, 2, 3, 4
EVAL_STREAM = 3
MODEL_NAME = "SetModel"


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_manifest(path: Path, doc: dict) -> str:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    path.write_text(text)
    return _sha(text.encode())


# simulate

def _eval_item(args):
    family, tc, seed, n, i = args
    item = sample_item(family, tc, RngStream(seed, EVAL_STREAM).child(n, i))
    q = None if item.query is None else [float(v) for v in item.query]
    return item.dataset.to_csv(), {"target": item.target.to_json(), "query": q}


def _pool_map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def corpus_dir(out: Path, n: int) -> Path:
    return out / "corpus" / f"N{n}"


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> dict:
    family = cfg.build_family()
    tc = cfg.train_config()
    tc = TrainConfig(**{**tc.__dict__, "normalize": False})
    manifests = {}
    for n in cfg.evaluation.sizes:
        tc_n = TrainConfig(**{**tc.__dict__, "dataset_size": int(n)})
        jobs = [(family, tc_n, cfg.evaluation.seed, int(n), i) for i in range(cfg.evaluation.count)]
        results = _pool_map(_eval_item, jobs, cfg.workers)
        d = corpus_dir(out, n)
        d.mkdir(parents=True, exist_ok=True)
        files = []
        for i, (text, _) in enumerate(results):
            name = f"dataset_{i:05d}.csv"
            (d / name).write_text(text)
            files.append({"name": name, "sha256": _sha(text.encode())})
        targets = [r[1] for r in results]
        ttext = json.dumps(targets, indent=1, sort_keys=True) + "\n"
        (d / "targets.json").write_text(ttext)
        doc = {"experiment": cfg.name, "config_hash": cfg.config_hash(), "seed": cfg.evaluation.seed,
               "n": int(n), "count": len(files), "estimand": tc.estimand, "files": files,
               "targets_sha256": _sha(ttext.encode()), "family": _family_doc(family)}
        manifests[str(n)] = _write_manifest(d / "manifest.json", doc)
        if isinstance(family, ConditionedFamily) and family.mode == COMPOSE and cfg.family.get("real_outcomes"):
            corpora = semisynthetic_train_eval_split(family, int(n), 0, cfg.evaluation.count,
                                                     RngStream(cfg.evaluation.seed, EVAL_STREAM).child(n))
            real = write_semisynthetic(out / "corpus_real" / f"N{n}", corpora)
            manifests[f"{n}:real"] = real["provenance_hash"]
    return manifests


def _family_doc(family) -> dict:
    doc = family.to_dict()
    doc["structure"] = family.structure
    return doc


def load_corpus(out: Path, n: int) -> tuple[list[ObservedDataset], np.ndarray, list, dict]:
    d = corpus_dir(out, n)
    if not (d / "manifest.json").exists():
        raise ContractError(f"no corpus at {d}; run simulate first")
    manifest = json.loads((d / "manifest.json").read_text())
    structure = manifest["family"]["structure"]
    datasets = [ObservedDataset.from_csv(d / f["name"], structure) for f in manifest["files"]]
    targets = json.loads((d / "targets.json").read_text())
    truths = np.array([t["target"]["value"] for t in targets])
    queries = [None if t["query"] is None else np.array(t["query"]) for t in targets]
    return datasets, truths, queries, manifest


# train

def cmd_train(cfg: ExperimentConfig, out: Path, resume: bool = False, max_steps: int | None = None) -> TrainedModel:
    family = cfg.build_family()
    tc = cfg.train_config()
    mc = cfg.model_config(family, tc.estimand)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.json"
    model = train(family, mc, tc, checkpoint_path=ckpt, resume=resume, max_steps=max_steps)
    write_curve(out / "curve.csv", model.curve)
    _write_manifest(out / "train_manifest.json",
                    {"experiment": cfg.name, "config_hash": cfg.config_hash(), "steps": len(model.curve),
                     "checkpoint_sha256": _sha(ckpt.read_bytes())})
    return model


# evaluate / baselines

def _baseline_predictions(cfg, datasets, queries, structure):
    settings = cfg.mlp_settings()
    preds, statuses = {}, {}
    qs = None if all(q is None for q in queries) else queries
    for kind in cfg.baseline_kinds(structure):
        vals, status = estimate_many(BaselineSpec(kind, settings), datasets, qs)
        preds[kind], statuses[kind] = vals, status
    return preds, statuses


def _metrics_for(pred, truths, filter_range):
    ok = np.isfinite(pred)
    if ok.sum() < 2:
        return None
    return ev.compute_metrics(pred[ok], truths[ok], filter_range, strict=False)


def cmd_evaluate(cfg: ExperimentConfig, out: Path, checkpoint: Path | None, with_model: bool = True,
                 predictors: dict | None = None) -> dict:
    """Metrics for the trained model and each baseline on every corpus size.

    ``predictors`` maps extra method names to ``fn(datasets, queries) -> estimates``.
    """
    fr = None if cfg.evaluation.filter_range is None else tuple(cfg.evaluation.filter_range)
    model = None
    if with_model:
        path = checkpoint or out / "model.json"
        if not Path(path).exists():
            raise ContractError(f"checkpoint {path} not found; run train first")
        model = TrainedModel.load(path)
    rows, summary = [], {}
    eval_dir = out / ("eval" if with_model else "baselines")
    eval_dir.mkdir(parents=True, exist_ok=True)
    for n in cfg.evaluation.sizes:
        datasets, truths, queries, manifest = load_corpus(out, n)
        structure = manifest["family"]["structure"]
        if model is not None and model.provenance.get("structure") != structure:
            raise ContractError(f"checkpoint was trained on {model.provenance.get('structure')}, "
                                f"corpus is {structure}")
        qs = None if all(q is None for q in queries) else queries
        preds, statuses = {}, {}
        if model is not None:
            preds[MODEL_NAME] = predict_many(model, datasets, qs)
            statuses[MODEL_NAME] = ["ok"] * len(datasets)
        for name, fn in (predictors or {}).items():
            preds[name] = np.asarray(fn(datasets, qs), float)
            statuses[name] = ["ok"] * len(datasets)
        base, base_status = _baseline_predictions(cfg, datasets, queries, structure)
        preds.update(base)
        statuses.update(base_status)
        for method, p in preds.items():
            rep = _metrics_for(np.asarray(p, float), truths, fr)
            summary.setdefault(method, {})[str(n)] = None if rep is None else rep.to_json()
            lines = ["index,truth,prediction,status"]
            lines += [f"{i},{t!r},{float(v)!r},{s}" for i, (t, v, s) in
                      enumerate(zip(truths, p, statuses[method]))]
            (eval_dir / f"predictions_{method}_N{n}.csv").write_text("\n".join(lines) + "\n")
        if cfg.evaluation.buckets and structure == INSTRUMENT:
            strengths = [ev.empirical_strength(ds.t, ds.blocks["instrument"]) for ds in datasets]
            b = ev.strength_buckets(strengths, truths, {m: np.asarray(v) for m, v in preds.items()},
                                    tuple(cfg.evaluation.edges), fr)
            doc = {"omitted": b["omitted"],
                   "buckets": {k: {"count": v["count"],
                                   "methods": {m: r.to_json() for m, r in v["methods"].items()}}
                               for k, v in b["buckets"].items()}}
            ev.save_json(eval_dir / f"buckets_N{n}.json", doc)
    for method, reports in summary.items():
        ev.save_json(eval_dir / f"{method}.json", reports)
        rows.append({"setting": cfg.name, "model": method, "reports": reports})
    table = ev.render_table(rows, cfg.evaluation.sizes)
    if "text" in cfg.report_formats:
        (eval_dir / "table.txt").write_text(table)
    return summary


def cmd_decompose(cfg: ExperimentConfig, out: Path) -> dict:
    makers = {"randomized": ev.randomized_binary_family, "confounded": ev.confounded_binary_family}
    out.mkdir(parents=True, exist_ok=True)
    result = {}
    for name in cfg.decomposition.families:
        if name not in makers:
            raise ConfigError(f"unknown toy family {name!r}")
        fam = makers[name]()
        n = cfg.decomposition.n
        opt = ev.posterior_mean_predictor(fam, n)
        stream = RngStream(cfg.seed, 7).child(len(result))
        perturbed = {k: v + float(stream.normal(0.0, 0.05)) for k, v in sorted(opt.items())}
        result[name] = {"posterior_mean": ev.exact_decomposition(fam, n, opt).to_json(),
                        "perturbed": ev.exact_decomposition(fam, n, perturbed).to_json()}
    ev.save_json(out / "decomposition.json", result)
    return result


def cmd_report(cfg: ExperimentConfig, out: Path) -> str:
    rows = []
    for sub in ("eval", "baselines"):
        d = out / sub
        if not d.exists():
            continue
        for f in sorted(d.glob("*.json")):
            if f.name.startswith("buckets_"):
                continue
            if any(r["model"] == f.stem for r in rows):
                continue
            rows.append({"setting": cfg.name, "model": f.stem, "reports": json.loads(f.read_text())})
    if not rows:
        raise ContractError(f"no evaluation results under {out}")
    table = ev.render_table(rows, cfg.evaluation.sizes)
    (out / "report.txt").write_text(table)
    ev.save_json(out / "report.json", {r["model"]: r["reports"] for r in rows})
    return table


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalmeta", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "train", "evaluate", "baselines", "decompose", "report"):
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="experiment JSON; defaults apply when omitted")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", type=Path)
        s.add_argument("--workers", type=int)
        s.add_argument("--filter-range", type=float, nargs=2, metavar=("LOW", "HIGH"))
        s.add_argument("--no-filter", action="store_true", help="disable the prediction filter")
        s.add_argument("--buckets", action="store_true", help="instrument-strength breakdown")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a dotted config key with a JSON value")
        if name == "train":
            s.add_argument("--resume", action="store_true")
            s.add_argument("--max-steps", type=int)
        if name == "evaluate":
            s.add_argument("--checkpoint", type=Path)
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    sets = list(args.set)
    if args.seed is not None:
        sets.append(f"seed={args.seed}")
    if args.out is not None:
        sets.append(f"output_dir={json.dumps(str(args.out))}")
    if args.workers is not None:
        sets.append(f"workers={args.workers}")
    if args.filter_range is not None:
        sets.append(f"evaluation.filter_range={json.dumps(list(args.filter_range))}")
    if args.no_filter:
        sets.append("evaluation.filter_range=null")
    if args.buckets:
        sets.append("evaluation.buckets=true")
    return apply_overrides(cfg, sets) if sets else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg.output_dir)
        if args.command == "simulate":
            hashes = cmd_simulate(cfg, out)
            print(json.dumps(hashes, sort_keys=True))
        elif args.command == "train":
            model = cmd_train(cfg, out, args.resume, args.max_steps)
            print(f"trained {len(model.curve)} steps; checkpoint {out / 'model.json'}")
        elif args.command == "evaluate":
            cmd_evaluate(cfg, out, args.checkpoint)
            print((out / "eval" / "table.txt").read_text() if (out / "eval" / "table.txt").exists() else "done")
        elif args.command == "baselines":
            cmd_evaluate(cfg, out, None, with_model=False)
            print((out / "baselines" / "table.txt").read_text()
                  if (out / "baselines" / "table.txt").exists() else "done")
        elif args.command == "decompose":
            print(json.dumps(cmd_decompose(cfg, out), indent=2, sort_keys=True))
        else:
            print(cmd_report(cfg, out), end="")
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, DegenerateError, FileNotFoundError) as exc:
        print(f"data contract error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
