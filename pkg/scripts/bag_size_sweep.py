"""Precision of every classifier as the number of images per profile grows.

Runs on the planted-witness family, with the class separation set so that
the best instance-level classifier is right about 75% of the time.

    python3 scripts/bag_size_sweep.py --runs 10 --out results/bag_size
"""
import argparse
import json
import logging
from dataclasses import asdict
from pathlib import Path

from profilemil.evaluation import CLASSIFIERS, DISPLAY_NAMES, ExperimentConfig, sweep
from profilemil.synth import SynthSpec, generate_planted, separation_for_accuracy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--profiles", type=int, default=100, help="profiles per class")
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", type=float, default=0.4, help="noise fraction per bag")
    ap.add_argument("--target", type=float, default=0.75, help="instance-level Bayes accuracy")
    ap.add_argument("--classifiers", nargs="+", default=list(CLASSIFIERS), choices=CLASSIFIERS)
    ap.add_argument("--bag-sizes", nargs="+", type=int, default=[1, 2, 5, 10, 12])
    ap.add_argument("--quick", action="store_true", help="single C=1, gamma=0.1 instead of grid search")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results/bag_size")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    spec = SynthSpec(profiles_per_class=args.profiles, instances_per_bag=max(args.bag_sizes),
                     noise_fraction=args.noise,
                     separation=separation_for_accuracy(args.target, args.noise, max(args.bag_sizes)),
                     seed=args.seed)
    bags = generate_planted(spec)
    grid = {"C": [1.0], "gamma": [0.1]} if args.quick else None
    base = ExperimentConfig(runs=args.runs, seed=args.seed, grid=grid)
    result = sweep({"deep": bags}, args.classifiers, args.bag_sizes, base, args.jobs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(result.merged_csv())
    table = {(r.classifier, r.bag_size): r.precision for r in result.reports}
    (out / "summary.json").write_text(json.dumps({
        "synth": asdict(spec), "config": base.to_dict(),
        "precision": {f"{c}/{k}": p for (c, k), p in table.items()}}, indent=2, sort_keys=True))

    print(f"{'|X|':<14}" + "".join(f"{k:>8d}" for k in args.bag_sizes))
    for c in args.classifiers:
        cells = "".join(f"{table[c, k]:>8.3f}" if (c, k) in table else f"{'-':>8}"
                        for k in args.bag_sizes)
        print(f"{DISPLAY_NAMES[c]:<14}{cells}")


if __name__ == "__main__":
    main()
