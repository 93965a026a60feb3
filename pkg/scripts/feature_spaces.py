"""Compare HoC, HoG and GIST on an image corpus where only colour carries the class.

Writes PNG images and a labeled manifest, extracts each feature space with
the command line tool, then sweeps the classifiers over all spaces.

    python3 scripts/feature_spaces.py --out results/feature_spaces
"""
import argparse
import json
from pathlib import Path

from PIL import Image

from profilemil.cli import main as cli
from profilemil.ingest import ProfileManifestEntry, write_manifest
from profilemil.synth import generate_palette_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--profiles", type=int, default=30, help="profiles per class")
    ap.add_argument("--images", type=int, default=5, help="images per profile")
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results/feature_spaces")
    args = ap.parse_args()

    out = Path(args.out).resolve()
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for pid, label, images in generate_palette_corpus(args.profiles, args.images, seed=args.seed):
        paths = []
        for j, px in enumerate(images):
            rel = f"images/{pid}_{j}.png"
            Image.fromarray(px).save(out / rel)
            paths.append(rel)
        entries.append(ProfileManifestEntry(pid, tuple(paths), label=label))
    write_manifest(entries, out / "manifest.jsonl")

    spaces = ("hoc", "hog", "gist")
    for space in spaces:
        code = cli(["features", "--manifest", str(out / "manifest.jsonl"), "--space", space,
                    "--out", str(out / f"features_{space}.csv"), "--jobs", str(args.jobs)])
        if code:
            raise SystemExit(code)

    cfg = {"data": {"manifest": "manifest.jsonl",
                    "features": {s: f"features_{s}.csv" for s in spaces}},
           "classifiers": ["nb", "logreg", "svm_linear", "misvm"],
           "bag_sizes": [1, args.images], "runs": args.runs, "seed": args.seed,
           "standardize": True, "out": "sweep"}
    (out / "sweep_config.json").write_text(json.dumps(cfg, indent=2))
    raise SystemExit(cli(["sweep", "--config", str(out / "sweep_config.json"),
                          "--jobs", str(args.jobs)]))


if __name__ == "__main__":
    main()
