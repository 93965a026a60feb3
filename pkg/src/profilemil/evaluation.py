"""Metrics, cross-validated grid search and the repeated-run experiment driver."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .aggregate import predict_bag_sil, propagated_arrays
from .classifiers import (
    TrainConfig,
    train_gaussian_nb,
    train_linear_svm,
    train_logreg,
    train_rbf_svm,
)
from .core import (
    Bag,
    Dataset,
    SignMapping,
    derive_rng,
    split_dataset,
    subsample_bags,
    to_signed,
)
from .errors import EmptyEvaluation, ProfileMilError
from .mil import MisvmConfig, predict_bag, train_misvm

log = logging.getLogger(__name__)

CLASSIFIERS = ("nb", "logreg", "svm_linear", "svm_rbf", "misvm")
DISPLAY_NAMES = {
    "nb": "NB-Gaussian",
    "logreg": "Log. Reg. l2",
    "svm_linear": "SVM-linear",
    "svm_rbf": "SVM-RBF",
    "misvm": "MISVM-linear",
}
DEFAULT_C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA_GRID = (1e-3, 1e-2, 0.1, 1.0)
CSV_COLUMNS = ("classifier", "feature_space", "bag_size", "run", "precision", "accuracy", "ties")


# ---------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class ConfusionCounts:
    """``counts[g, p]`` = number of bags with gold label g predicted as p."""

    labels: tuple
    counts: np.ndarray

    @classmethod
    def from_predictions(cls, gold: Sequence[str], predicted: Sequence[str], labels: Sequence[str]):
        if len(gold) != len(predicted):
            raise ValueError("gold and predicted lengths differ")
        index = {l: i for i, l in enumerate(labels)}
        cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for g, p in zip(gold, predicted):
            cm[index[g], index[p]] += 1
        return cls(tuple(labels), cm)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def weighted_precision(cm: ConfusionCounts) -> float:
    """Per-label precision averaged with weights proportional to gold support.

    A label that is never predicted has precision 0.
    """
    total = cm.total
    if total == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    c = cm.counts.astype(float)
    predicted = c.sum(axis=0)
    support = c.sum(axis=1)
    tp = np.diag(c)
    prec = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    return float((support * prec).sum() / total)


def accuracy(cm: ConfusionCounts) -> float:
    total = cm.total
    if total == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    return float(np.trace(cm.counts) / total)


# ---------------------------------------------------------------------------
# model fitting over bags

@dataclass(frozen=True)
class GridSpec:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.values.items():
            if len(v) == 0:
                raise ValueError(f"grid for {k!r} is empty")

    def points(self) -> list:
        keys = list(self.values)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.values[k] for k in keys))]


def default_grid(kind: str) -> GridSpec:
    if kind == "nb":
        return GridSpec({})
    if kind == "svm_rbf":
        return GridSpec({"C": list(DEFAULT_C_GRID), "gamma": list(DEFAULT_GAMMA_GRID)})
    if kind in ("logreg", "svm_linear", "misvm"):
        return GridSpec({"C": list(DEFAULT_C_GRID)})
    raise ValueError(f"unknown classifier {kind!r}")


def grid_for(kind: str, grids: Optional[dict]) -> GridSpec:
    """Restrict a shared ``{param: values}`` mapping to the parameters ``kind`` uses."""
    base = default_grid(kind)
    if not grids:
        return base
    return GridSpec({k: list(grids.get(k, v)) for k, v in base.values.items()})


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, bags):
        X = np.vstack([b.instances for b in bags])
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def apply(self, bags):
        return [b.with_instances((b.instances - self.mean) / self.scale) for b in bags]


def fit_model(kind: str, bags: Sequence[Bag], params: dict, mapping: SignMapping,
              train_cfg: TrainConfig = TrainConfig(), max_outer_iterations: int = 50,
              misvm_init: str = "bag_mean"):
    cfg = replace(train_cfg, **params)
    if kind == "misvm":
        return train_misvm(bags, MisvmConfig(cfg.C, max_outer_iterations, cfg, cfg.seed, misvm_init),
                           mapping)
    X, y = propagated_arrays(bags, mapping)
    trainer = {"nb": train_gaussian_nb, "logreg": train_logreg,
               "svm_linear": train_linear_svm, "svm_rbf": train_rbf_svm}[kind]
    return trainer(X, y, cfg)


def predict_bags(model, kind: str, bags: Sequence[Bag], mapping: SignMapping, seed: int):
    """Bag-level predictions and the number of voting ties."""
    preds, ties = [], 0
    for bag in bags:
        if kind == "misvm":
            preds.append(predict_bag(model, bag, mapping))
        else:
            label, tie = predict_bag_sil(model, bag, mapping, seed, return_tie=True)
            preds.append(label)
            ties += tie
    return preds, ties


def evaluate_bags(model, kind, bags, mapping, seed):
    preds, ties = predict_bags(model, kind, bags, mapping, seed)
    cm = ConfusionCounts.from_predictions([b.gold_label for b in bags], preds, mapping.labels)
    return cm, ties


# ---------------------------------------------------------------------------
# cross-validation

def assign_folds(bags: Sequence[Bag], folds: int, seed: int) -> np.ndarray:
    """Stratified fold index per bag: each label's bags are shuffled and dealt round-robin."""
    out = np.empty(len(bags), dtype=int)
    by_label = {}
    for i, b in enumerate(bags):
        by_label.setdefault(b.gold_label, []).append(i)
    offset = 0
    for label in sorted(by_label, key=str):
        idx = np.array(by_label[label])
        idx = idx[derive_rng(seed, "folds", label).permutation(len(idx))]
        out[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return out


@dataclass
class CVResult:
    best: dict
    scores: list  # (params, mean precision or None) in grid order
    degenerate_folds: list
    experiments: int


def cross_validate(train_bags: Sequence[Bag], kind: str, grid: GridSpec, folds: int = 5,
                   seed: int = 0, mapping: SignMapping = SignMapping(),
                   train_cfg: TrainConfig = TrainConfig(), max_outer_iterations: int = 50,
                   misvm_init: str = "bag_mean") -> CVResult:
    """Grid point with the highest mean validation weighted precision.

    Folds partition the bags at profile level. A fold whose training or
    validation part holds a single class is skipped. Ties go to the first
    point in grid order.
    """
    if folds < 2:
        raise ValueError("need at least two folds")
    points = grid.points()
    if len(points) == 1:
        return CVResult(points[0], [(points[0], None)], [], 0)
    train_bags = list(train_bags)
    fold_of = assign_folds(train_bags, folds, seed)
    splits, degenerate = [], []
    for f in range(folds):
        tr = [b for b, k in zip(train_bags, fold_of) if k != f]
        va = [b for b, k in zip(train_bags, fold_of) if k == f]
        if len({b.gold_label for b in tr}) < 2 or len({b.gold_label for b in va}) < 2:
            degenerate.append(f)
            continue
        splits.append((tr, va))
    if degenerate:
        log.warning("cross-validation: skipped degenerate folds %s", degenerate)
    scores = []
    best, best_score = points[0], -np.inf
    n_exp = 0
    for p in points:
        vals = []
        for tr, va in splits:
            model = fit_model(kind, tr, p, mapping, train_cfg, max_outer_iterations, misvm_init)
            cm, _ = evaluate_bags(model, kind, va, mapping, seed)
            vals.append(weighted_precision(cm))
            n_exp += 1
        score = float(np.mean(vals)) if vals else None
        scores.append((p, score))
        if score is not None and score > best_score:
            best, best_score = p, score
    return CVResult(best, scores, degenerate, n_exp)


# ---------------------------------------------------------------------------
# experiments

@dataclass(frozen=True)
class ExperimentConfig:
    classifier: str = "svm_linear"
    bag_size: int = 12
    feature_space: str = "deep"
    runs: int = 10
    seed: int = 0
    folds: int = 5
    train_fraction: float = 0.8
    grid: Optional[dict] = None
    standardize: bool = False
    train: TrainConfig = TrainConfig()
    max_outer_iterations: int = 50
    misvm_init: str = "bag_mean"
    positive_label: str = "female"
    negative_label: str = "male"

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if self.bag_size < 1 or self.runs < 1:
            raise ValueError("bag_size and runs must be >= 1")

    @property
    def mapping(self) -> SignMapping:
        return SignMapping(self.positive_label, self.negative_label)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = grid_for(self.classifier, self.grid).values
        return d


@dataclass
class RunResult:
    run: int
    seed: int
    precision: float
    accuracy: float
    ties: int
    params: dict
    n_train: int
    n_test: int


@dataclass
class EvalReport:
    config: dict
    runs: list
    precision: float
    accuracy: float
    ties: int
    experiments: int

    @property
    def classifier(self):
        return self.config["classifier"]

    @property
    def bag_size(self):
        return self.config["bag_size"]

    @property
    def feature_space(self):
        return self.config["feature_space"]

    def to_dict(self) -> dict:
        return {"config": self.config, "runs": [asdict(r) for r in self.runs],
                "precision": self.precision, "accuracy": self.accuracy,
                "ties": self.ties, "experiments": self.experiments}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_rows(self) -> list:
        return [(self.classifier, self.feature_space, self.bag_size, r.run,
                 repr(r.precision), repr(r.accuracy), r.ties) for r in self.runs]


def run_experiment(bags, cfg: ExperimentConfig) -> EvalReport:
    """Average test metrics over ``cfg.runs`` resplit/resampled runs.

    Run ``r`` uses seed ``cfg.seed + r`` for the profile split, the
    per-profile subsampling, the CV folds and the vote tie-breaks.
    Profiles with fewer than ``bag_size`` instances are dropped.
    """
    if isinstance(bags, Dataset):
        bags = bags.bags
    mapping = cfg.mapping
    grid = grid_for(cfg.classifier, cfg.grid)
    eligible = [b for b in bags if len(b) >= cfg.bag_size]
    dropped = len(bags) - len(eligible)
    if dropped:
        log.info("dropping %d profile(s) with fewer than %d instances", dropped, cfg.bag_size)
    runs, n_exp = [], 0
    for r in range(cfg.runs):
        s = cfg.seed + r
        ds = split_dataset(eligible, cfg.train_fraction, s, mapping.labels)
        train = subsample_bags(ds.train, cfg.bag_size, s)
        test = subsample_bags(ds.test, cfg.bag_size, s)
        if cfg.standardize:
            st = Standardizer.fit(train)
            train, test = st.apply(train), st.apply(test)
        train_cfg = replace(cfg.train, seed=s)
        cv = cross_validate(train, cfg.classifier, grid, cfg.folds, s, mapping, train_cfg,
                            cfg.max_outer_iterations, cfg.misvm_init)
        n_exp += cv.experiments
        model = fit_model(cfg.classifier, train, cv.best, mapping, train_cfg,
                          cfg.max_outer_iterations, cfg.misvm_init)
        cm, ties = evaluate_bags(model, cfg.classifier, test, mapping, s)
        runs.append(RunResult(r, s, weighted_precision(cm), accuracy(cm), ties,
                              {k: float(v) for k, v in cv.best.items()}, len(train), len(test)))
        log.info("%s bag=%d run %d: P=%.4f A=%.4f", cfg.classifier, cfg.bag_size, r,
                 runs[-1].precision, runs[-1].accuracy)
    config = cfg.to_dict()
    config["seeds"] = [cfg.seed + r for r in range(cfg.runs)]
    config["profiles"] = len(eligible)
    return EvalReport(config, runs,
                      float(np.mean([x.precision for x in runs])),
                      float(np.mean([x.accuracy for x in runs])),
                      int(sum(x.ties for x in runs)), n_exp)


@dataclass
class CellFailure:
    classifier: str
    feature_space: str
    bag_size: int
    error: str


@dataclass
class SweepResult:
    reports: list
    failures: list

    def merged_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep in self.reports:
            w.writerows(rep.csv_rows())
        return buf.getvalue()

    @property
    def experiments(self) -> int:
        return sum(r.experiments for r in self.reports)


def _run_cell(args):
    bags, cfg = args
    try:
        return run_experiment(bags, cfg)
    except ProfileMilError as exc:
        return CellFailure(cfg.classifier, cfg.feature_space, cfg.bag_size,
                           f"{type(exc).__name__}: {exc}")


def sweep_cells(classifiers, bag_sizes, feature_spaces, base: ExperimentConfig) -> list:
    """Cell configs in axis order: feature space, classifier, bag size."""
    return [replace(base, classifier=c, bag_size=k, feature_space=f)
            for f in feature_spaces for c in classifiers for k in bag_sizes]


def sweep(bags_by_space: dict, classifiers: Sequence[str], bag_sizes: Sequence[int],
          base: ExperimentConfig = ExperimentConfig(), jobs: int = 1) -> SweepResult:
    """Run every (feature space, classifier, bag size) cell; failed cells are recorded."""
    if not classifiers or not bag_sizes or not bags_by_space:
        raise ValueError("sweep axes must be non-empty")
    cells = sweep_cells(classifiers, bag_sizes, list(bags_by_space), base)
    work = [(bags_by_space[c.feature_space], c) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, work))
    else:
        results = [_run_cell(w) for w in work]
    reports = [r for r in results if isinstance(r, EvalReport)]
    failures = [r for r in results if isinstance(r, CellFailure)]
    for f in failures:
        log.warning("cell %s/%s/%d failed: %s", f.feature_space, f.classifier, f.bag_size, f.error)
    return SweepResult(reports, failures)


def best_per_classifier(reports: Sequence[EvalReport]) -> list:
    """Highest-precision cell per classifier, in first-seen classifier order."""
    best = {}
    for rep in reports:
        cur = best.get(rep.classifier)
        if cur is None or rep.precision > cur.precision:
            best[rep.classifier] = rep
    return list(best.values())


def format_summary(reports: Sequence[EvalReport]) -> str:
    lines = [f"{'Classifier':<14}{'P':>8}{'A':>8}{'|X|':>6}  space"]
    for rep in best_per_classifier(reports):
        lines.append(f"{DISPLAY_NAMES.get(rep.classifier, rep.classifier):<14}"
                     f"{rep.precision:>8.3f}{rep.accuracy:>8.3f}{rep.bag_size:>6d}  {rep.feature_space}")
    return "\n".join(lines)
