"""Command-line entry point.

Subcommands: synth, extract, train-eval, rfe, correlate, multiclass,
boost-demo. Every command writes into ``--out`` and exits non-zero only
when it recorded an error and produced no primary artifact.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import evaluation as ev
from .features import (
    FEATURE_NAMES,
    LabeledDataset,
    build_dataset,
    read_csv,
    write_csv,
    write_jsonl,
)
from .flows import group_by_key, join_records, label_aggregates, load_manifest
from .ml import (
    TrainConfig,
    adaboost_demo,
    derive_seed,
    feature_importance,
    make_pool,
    save_model,
    train,
)
from .synth import SynthSpec, write_capture
from .zeek import ZeekLogError, read_log

log = logging.getLogger("tlsclassify")

MODEL_KINDS = ("svm", "forest", "boosting")


@dataclass
class RunConfig:
    manifest: Optional[str] = None
    out: str = "out"
    features: Optional[str] = None
    model: str = "forest"
    n_folds: int = 10
    seed: int = 0
    train: dict = field(default_factory=dict)
    rfe_step: int = 1
    boost_L: tuple = (250, 500, 1000)
    boost_iterations: int = 200
    boost_pool: int = 1000
    boost_samples: int = 200
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}")
        self.boost_L = tuple(self.boost_L)

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict({"seed": derive_seed(self.seed, "train"), **self.train})

    def features_path(self) -> str:
        return self.features or os.path.join(self.out, "features.csv")


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# commands


def extract_capture(capture) -> tuple:
    """Parse, join, group and label one capture; returns (aggregates, stats)."""
    stats = {"name": capture.name}
    records = {}
    for kind in ("conn", "ssl", "x509"):
        recs, parsed = read_log(getattr(capture, kind), kind)
        records[kind] = recs
        stats[f"{kind}_records"] = parsed.yielded
        stats[f"{kind}_skipped"] = parsed.skipped
    flows = join_records(records["conn"], records["ssl"], records["x509"])
    aggs, dropped = group_by_key(flows)
    aggs = label_aggregates(aggs, capture.labels)
    for a in aggs:
        a.capture = capture.name
    stats.update(
        flows=len(flows),
        dropped_non_ssl_flows=dropped,
        aggregates=len(aggs),
        benign=sum(a.label == "benign" for a in aggs),
        malicious=sum(a.label == "malicious" for a in aggs),
        benign_flows=sum(len(a.flows) for a in aggs if a.label == "benign"),
        malicious_flows=sum(len(a.flows) for a in aggs if a.label == "malicious"),
    )
    return aggs, stats


def cmd_extract(cfg: RunConfig) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    summary = {"captures": [], "errors": []}
    aggs = []
    for cap in load_manifest(cfg.manifest):
        try:
            got, stats = extract_capture(cap)
        except (OSError, ZeekLogError, ValueError) as exc:
            summary["errors"].append({"capture": cap.name, "error": f"{type(exc).__name__}: {exc}"})
            log.error("capture %s failed: %s", cap.name, exc)
            continue
        aggs.extend(got)
        summary["captures"].append(stats)
    ds = build_dataset(aggs)
    if len(ds) or not summary["errors"]:
        write_csv(ds, cfg.features_path())
        write_jsonl(ds, os.path.join(cfg.out, "features.jsonl"))
        summary["features_csv"] = os.path.basename(cfg.features_path())
    summary["totals"] = {
        "aggregates": len(ds),
        "benign": int((ds.y == 0).sum()),
        "malicious": int((ds.y == 1).sum()),
    }
    _dump_json(summary, os.path.join(cfg.out, "extract_summary.json"))
    summary["ok"] = "features_csv" in summary
    return summary


def _load_features(cfg: RunConfig) -> LabeledDataset:
    return read_csv(cfg.features_path())


def cmd_train_eval(cfg: RunConfig) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    ds = _load_features(cfg)
    tc = cfg.train_config()
    trainer = ev.make_trainer(cfg.model, tc)
    rep = ev.cross_validate(trainer, ds.X, ds.y, cfg.n_folds, derive_seed(cfg.seed, "cv"))
    model = train(cfg.model, ds.X, ds.y, tc)
    ranking = feature_importance(model, ds.feature_names)
    report = rep.to_dict()
    report["config"] = tc.to_dict()
    report["top_features"] = [name for name, _ in ranking[:15]]
    tag = cfg.model
    _dump_json(report, os.path.join(cfg.out, f"cv_report_{tag}.json"))
    if rep.roc is not None:
        _write_rows(os.path.join(cfg.out, f"roc_{tag}.csv"), ["fpr", "tpr"],
                    [(repr(a), repr(b)) for a, b in rep.roc.points])
    _write_rows(os.path.join(cfg.out, f"folds_{tag}.csv"), ["fold", "accuracy"],
                [(i, repr(a)) for i, a in enumerate(rep.fold_accuracy)])
    _write_rows(os.path.join(cfg.out, f"importance_{tag}.csv"), ["rank", "feature", "weight"],
                [(i + 1, n, repr(w)) for i, (n, w) in enumerate(ranking)])
    save_model(model, os.path.join(cfg.out, f"model_{tag}.json"),
               extra={"feature_names": list(ds.feature_names)})
    return report


def cmd_rfe(cfg: RunConfig) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    ds = _load_features(cfg)
    trainer = ev.make_trainer(cfg.model, cfg.train_config())
    res = ev.rfe(trainer, ds.X, ds.y, cfg.n_folds, derive_seed(cfg.seed, "rfe"),
                 cfg.rfe_step, ds.feature_names)
    out = res.to_dict()
    out["model"] = cfg.model
    _dump_json(out, os.path.join(cfg.out, f"rfe_{cfg.model}.json"))
    _write_rows(os.path.join(cfg.out, f"rfe_accuracy_{cfg.model}.csv"), ["k", "accuracy"],
                [(k, repr(a)) for k, a in sorted(res.accuracy_by_k.items())])
    return out


def cmd_correlate(cfg: RunConfig) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    ds = _load_features(cfg)
    r, constant = ev.pearson_matrix(ds.X)
    names = list(ds.feature_names)
    _write_rows(os.path.join(cfg.out, "correlation.csv"), ["feature", *names],
                [(n, *map(repr, row.tolist())) for n, row in zip(names, r)])
    out = {
        "features": names,
        "constant_features": [n for n, c in zip(names, constant) if c],
        "n_rows": len(ds),
    }
    _dump_json(out, os.path.join(cfg.out, "correlation.json"))
    out["matrix"] = r
    return out


def cmd_multiclass(cfg: RunConfig) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    ds = _load_features(cfg)
    out = ev.multiclass_experiment(ds, cfg.model, cfg.train_config(), cfg.n_folds,
                                   derive_seed(cfg.seed, "multiclass"))
    _dump_json(out, os.path.join(cfg.out, f"multiclass_{cfg.model}.json"))
    return out


def cmd_boost_demo(cfg: RunConfig) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    pool = make_pool(cfg.boost_pool, cfg.boost_samples,
                     rng=np.random.default_rng(derive_seed(cfg.seed, "boost-demo")))
    curves = {L: adaboost_demo(pool, L, cfg.boost_iterations) for L in cfg.boost_L}
    _write_rows(os.path.join(cfg.out, "boost_curves.csv"),
                ["iteration", *[f"L={L}" for L in cfg.boost_L]],
                [(t + 1, *[repr(float(curves[L][t])) for L in cfg.boost_L])
                 for t in range(cfg.boost_iterations)])
    out = {
        "pool": {"classifiers": cfg.boost_pool, "samples": cfg.boost_samples,
                 "accuracy_min": float(pool.accuracies().min()),
                 "accuracy_max": float(pool.accuracies().max())},
        "curves": {str(L): {"max_accuracy": float(c.max()),
                            "final_accuracy": float(c[-1]),
                            "first_round_at_0.99": (int(np.argmax(c >= 0.99)) + 1
                                                    if (c >= 0.99).any() else None)}
                   for L, c in curves.items()},
    }
    _dump_json(out, os.path.join(cfg.out, "boost_demo.json"))
    out["raw"] = curves
    return out


def cmd_synth(cfg: RunConfig) -> dict:
    spec = SynthSpec(**{"seed": cfg.seed, **cfg.synth})
    manifest = write_capture(spec, cfg.out)
    return {"manifest": manifest}


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train-eval": cmd_train_eval,
    "rfe": cmd_rfe,
    "correlate": cmd_correlate,
    "multiclass": cmd_multiclass,
    "boost-demo": cmd_boost_demo,
}


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tlsclassify", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with RunConfig fields")
        sp.add_argument("--manifest")
        sp.add_argument("--out")
        sp.add_argument("--features", help="feature CSV (default: OUT/features.csv)")
        sp.add_argument("--model", choices=MODEL_KINDS)
        sp.add_argument("--folds", type=int, dest="n_folds")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--estimators", type=int)
        if name == "rfe":
            sp.add_argument("--step", type=int, dest="rfe_step")
        if name == "synth":
            sp.add_argument("--benign", type=int)
            sp.add_argument("--malicious", type=int)
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        allowed = {f.name for f in fields(RunConfig)}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key in ("manifest", "out", "features", "model", "n_folds", "seed", "rfe_step"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if args.estimators is not None:
        data.setdefault("train", {})["n_estimators"] = args.estimators
    synth = dict(data.get("synth", {}))
    if getattr(args, "benign", None) is not None:
        synth["n_benign"] = args.benign
    if getattr(args, "malicious", None) is not None:
        synth["n_malicious"] = args.malicious
    data["synth"] = synth
    return RunConfig(**data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "extract" and not cfg.manifest:
            raise ValueError("extract needs --manifest")
        result = COMMANDS[args.command](cfg)
    except (OSError, ValueError, ZeekLogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command == "extract" and not result["ok"]:
        return 1
    summary = {k: v for k, v in result.items() if k not in ("matrix", "raw")}
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
