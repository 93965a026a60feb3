"""Command line entry point.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical failure.
Progress goes to stderr; stdout carries only the final summary.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .classifiers import TrainConfig, save_model
from .core import subsample_bags
from .errors import ConfigError, DataError, ManifestParseError, MalformedAnnotations, \
    DuplicateProfile, NumericalFailure, ProfileMilError
from .evaluation import (
    CLASSIFIERS,
    ExperimentConfig,
    cross_validate,
    fit_model,
    format_summary,
    grid_for,
    run_experiment,
    sweep,
)
from .features import LOW_LEVEL_SPACES, DescriptorConfig, RgbImage, extract
from .ingest import (
    FeatureTable,
    adjudicate_entry,
    build_bags,
    load_feature_table,
    load_manifest,
    write_feature_table,
    write_manifest,
)
from .synth import SynthSpec, generate_planted

log = logging.getLogger("profilemil")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

TOP_KEYS = {
    "data", "classifier", "classifiers", "bag_size", "bag_sizes", "feature_space",
    "feature_spaces", "runs", "seed", "folds", "train_fraction", "grid", "params",
    "standardize", "train", "max_outer_iterations", "misvm_init", "positive_label", "negative_label", "out",
}
DATA_KEYS = {"manifest", "features", "space", "synthetic", "min_agreement", "judgements"}
TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"C", "gamma", "seed"}
SYNTH_KEYS = {f.name for f in dataclasses.fields(SynthSpec)}


# ---------------------------------------------------------------------------
# config handling

def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a JSON object")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown config key {where}.{key}" if where else f"unknown config key {key}")


def load_config(path, overrides: dict) -> dict:
    """Parse the JSON config, apply flag overrides and resolve relative paths."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    _check_keys(cfg, TOP_KEYS, "")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    base = Path(path).resolve().parent
    data = cfg.get("data", {})
    _check_keys(data, DATA_KEYS, "data")
    _check_keys(cfg.get("train", {}), TRAIN_KEYS, "train")
    if "synthetic" in data:
        _check_keys(data["synthetic"], SYNTH_KEYS, "data.synthetic")
    for key in ("manifest",):
        if key in data:
            data[key] = str((base / data[key]))
    if isinstance(data.get("features"), str):
        data["features"] = str(base / data["features"])
    elif isinstance(data.get("features"), dict):
        data["features"] = {k: str(base / v) for k, v in data["features"].items()}
    cfg["data"] = data
    out = cfg.get("out", "out")
    cfg["out"] = str(base / out) if "out" not in overrides or overrides["out"] is None else out
    return cfg


def _run_config(args) -> dict:
    """Config for train/eval/sweep with command-line overrides applied."""
    cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
    if args.manifest:
        cfg["data"].pop("synthetic", None)
        cfg["data"]["manifest"] = args.manifest
    if args.features:
        cfg["data"].pop("synthetic", None)
        cfg["data"]["features"] = args.features
    return cfg


def experiment_config(cfg: dict, classifier=None, bag_size=None) -> ExperimentConfig:
    try:
        train = TrainConfig(**cfg.get("train", {}))
        return ExperimentConfig(
            classifier=classifier or cfg.get("classifier", "svm_linear"),
            bag_size=int(bag_size or cfg.get("bag_size", 12)),
            feature_space=cfg.get("feature_space", "deep"),
            runs=int(cfg.get("runs", 10)),
            seed=int(cfg.get("seed", 0)),
            folds=int(cfg.get("folds", 5)),
            train_fraction=float(cfg.get("train_fraction", 0.8)),
            grid=cfg.get("grid"),
            standardize=bool(cfg.get("standardize", False)),
            train=train,
            max_outer_iterations=int(cfg.get("max_outer_iterations", 50)),
            misvm_init=cfg.get("misvm_init", "bag_mean"),
            positive_label=cfg.get("positive_label", "female"),
            negative_label=cfg.get("negative_label", "male"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_bags(cfg: dict, space_flag=None) -> dict:
    """Labeled bags per feature space as described by the ``data`` section."""
    data = cfg["data"]
    if "synthetic" in data:
        try:
            spec = SynthSpec(**data["synthetic"])
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return {spec.feature_space: generate_planted(spec)}
    if "manifest" not in data or "features" not in data:
        raise ConfigError("data needs either 'synthetic' or both 'manifest' and 'features'")
    try:
        entries = load_manifest(data["manifest"])
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from None
    labels = {}
    for e in entries:
        if e.label is not None:
            labels[e.profile_id] = e.label
        elif e.annotations:
            label, _ = adjudicate_entry(e, data.get("min_agreement", 0.6), data.get("judgements", 3))
            if label is not None:
                labels[e.profile_id] = label
    features = data["features"]
    if isinstance(features, str):
        features = {data.get("space") or space_flag or cfg.get("feature_space", "deep"): features}
    out = {}
    for space, path in features.items():
        try:
            table = load_feature_table(path, space)
        except FileNotFoundError as exc:
            raise DataError(str(exc)) from None
        bags = [b for b in build_bags(entries, table, labels) if b.gold_label is not None]
        if not bags:
            raise DataError(f"no labeled profiles with {space} features")
        out[space] = bags
    return out


def _write_json(path: Path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands

def cmd_adjudicate(args) -> int:
    entries = load_manifest(args.manifest)
    kept, reasons = [], Counter()
    for e in entries:
        label, why = adjudicate_entry(e, args.min_agreement, args.judgements)
        if label is None:
            reasons[why] += 1
        else:
            kept.append(dataclasses.replace(e, label=label))
    if args.out:
        write_manifest(kept, args.out)
    print(f"retained {len(kept)} excluded {sum(reasons.values())}")
    for why in sorted(reasons):
        print(f"  {why}: {reasons[why]}")
    return EXIT_OK


def _extract_one(job):
    path, space, cfg = job
    try:
        return extract(RgbImage.open(path), space, cfg).values
    except Exception as exc:  # unreadable or undecodable image
        return exc


def cmd_features(args) -> int:
    if args.space not in LOW_LEVEL_SPACES:
        raise ConfigError(f"--space must be one of {LOW_LEVEL_SPACES}")
    dcfg = DescriptorConfig()
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                dcfg = DescriptorConfig(**json.load(fh))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"descriptor config: {exc}") from None
    entries = load_manifest(args.manifest)
    root = Path(args.manifest).resolve().parent
    images = [p for e in entries for p in e.images]
    jobs = [(str(root / p), args.space, dcfg) for p in images]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_extract_one, jobs, chunksize=8))
    else:
        results = [_extract_one(j) for j in jobs]
    rows = {}
    for p, r in zip(images, results):
        if isinstance(r, Exception):
            log.warning("skipping %s: %s", p, r)
        else:
            rows[p] = r
    if not rows:
        log.error("no image could be processed")
        return EXIT_DATA
    dim = len(next(iter(rows.values())))
    write_feature_table(FeatureTable(args.space, dim, rows), args.out)
    print(f"wrote {len(rows)} rows ({len(images) - len(rows)} skipped) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    exp = experiment_config(cfg)
    bags_by_space = load_bags(cfg, args.space)
    space = exp.feature_space if exp.feature_space in bags_by_space else next(iter(bags_by_space))
    bags = subsample_bags(bags_by_space[space], exp.bag_size, exp.seed)
    train_cfg = dataclasses.replace(exp.train, seed=exp.seed)
    params = cfg.get("params")
    if params is None:
        cv = cross_validate(bags, exp.classifier, grid_for(exp.classifier, exp.grid), exp.folds,
                            exp.seed, exp.mapping, train_cfg, exp.max_outer_iterations,
                            exp.misvm_init)
        params = cv.best
    model = fit_model(exp.classifier, bags, params, exp.mapping, train_cfg,
                      exp.max_outer_iterations, exp.misvm_init)
    out = Path(cfg["out"])
    if out.suffix != ".json":
        out = out / f"model_{exp.classifier}_{space}_{exp.bag_size}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    resolved = exp.to_dict()
    resolved["feature_space"] = space
    save_model(model, out, params, {"config": resolved, "data": cfg["data"],
                                    "mapping": {"positive": exp.positive_label,
                                                "negative": exp.negative_label}})
    print(f"{exp.classifier} params={json.dumps(params, sort_keys=True)} -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    exp = experiment_config(cfg)
    bags_by_space = load_bags(cfg, args.space)
    space = exp.feature_space if exp.feature_space in bags_by_space else next(iter(bags_by_space))
    exp = dataclasses.replace(exp, feature_space=space)
    report = run_experiment(bags_by_space[space], exp)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    doc["data"] = cfg["data"]
    _write_json(out / f"report_{space}_{exp.classifier}_{exp.bag_size}.json", doc)
    print(format_summary([report]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    base = experiment_config(cfg)
    classifiers = cfg.get("classifiers", list(CLASSIFIERS))
    for c in classifiers:
        if c not in CLASSIFIERS:
            raise ConfigError(f"unknown classifier {c!r} in classifiers")
    bag_sizes = [int(k) for k in cfg.get("bag_sizes", [1, 2, 5, 10, 12])]
    bags_by_space = load_bags(cfg, args.space)
    spaces = cfg.get("feature_spaces", list(bags_by_space))
    missing = [s for s in spaces if s not in bags_by_space]
    if missing:
        raise DataError(f"no features for space(s) {missing}")
    result = sweep({s: bags_by_space[s] for s in spaces}, classifiers, bag_sizes, base, args.jobs)
    out = Path(cfg["out"])
    for rep in result.reports:
        _write_json(out / "cells" / f"{rep.feature_space}_{rep.classifier}_{rep.bag_size}.json",
                    rep.to_dict())
    (out / "results.csv").write_text(result.merged_csv(), encoding="utf-8")
    resolved = base.to_dict()
    resolved.update(classifiers=classifiers, bag_sizes=bag_sizes, feature_spaces=spaces,
                    grid={c: grid_for(c, base.grid).values for c in classifiers})
    _write_json(out / "sweep.json", {
        "config": resolved, "data": cfg["data"], "cells": len(result.reports),
        "experiments": result.experiments,
        "failures": [dataclasses.asdict(f) for f in result.failures]})
    summary = format_summary(result.reports)
    (out / "summary.txt").write_text(summary + "\n", encoding="utf-8")
    print(summary)
    return EXIT_OK if result.reports else EXIT_NUMERIC


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="profilemil",
                                     description="Bag-level gender inference experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("adjudicate", help="turn crowd annotations into gold labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--min-agreement", type=float, default=0.6)
    p.add_argument("--judgements", type=int, default=3)
    p.set_defaults(func=cmd_adjudicate)

    p = sub.add_parser("features", help="extract HoC/HoG/GIST features to a CSV table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--space", required=True, choices=LOW_LEVEL_SPACES)
    p.add_argument("--config", help="JSON descriptor configuration")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_features)

    for name, func, text in (("train", cmd_train, "fit one model"),
                             ("eval", cmd_eval, "run one repeated experiment"),
                             ("sweep", cmd_sweep, "run the classifier x bag size x space sweep")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--manifest", help="labeled manifest, overrides data.manifest")
        p.add_argument("--features", help="feature table, overrides data.features")
        p.add_argument("--space", help="feature space of a single feature table")
        p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be >= 1")
        return args.func(args)
    except (ManifestParseError, MalformedAnnotations, DuplicateProfile) as exc:
        code = EXIT_USAGE if args.command == "adjudicate" else EXIT_DATA
        print(f"error: {exc}", file=sys.stderr)
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
