import csv
import io

import numpy as np
import pytest

from profilemil.core import Bag, SignMapping
from profilemil.errors import EmptyEvaluation
from profilemil.evaluation import (
    CSV_COLUMNS,
    ConfusionCounts,
    ExperimentConfig,
    EvalReport,
    GridSpec,
    accuracy,
    assign_folds,
    best_per_classifier,
    cross_validate,
    format_summary,
    grid_for,
    run_experiment,
    sweep,
    weighted_precision,
)
from profilemil.synth import SynthSpec, generate_planted

LABELS = ("female", "male")
M = SignMapping("female", "male")


def test_worked_example():
    cm = ConfusionCounts.from_predictions(["female", "female", "male"],
                                          ["female", "male", "male"], LABELS)
    # female: precision 1 (support 2), male: precision 1/2 (support 1)
    assert weighted_precision(cm) == pytest.approx(5 / 6, abs=1e-12)
    assert accuracy(cm) == pytest.approx(2 / 3, abs=1e-12)


def precision_oracle(counts):
    """Direct definition with explicit loops over labels and cells."""
    L = counts.shape[0]
    total = sum(counts[g, p] for g in range(L) for p in range(L))
    out = 0.0
    for l in range(L):
        predicted = sum(counts[g, l] for g in range(L))
        support = sum(counts[l, p] for p in range(L))
        prec = counts[l, l] / predicted if predicted else 0.0
        out += support / total * prec
    return out


def test_metrics_match_oracle_on_random_matrices():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        L = int(rng.integers(2, 5))
        counts = rng.integers(0, 20, (L, L)) * (rng.random((L, L)) < 0.7)
        if counts.sum() == 0:
            counts[0, 0] = 1
        cm = ConfusionCounts(tuple(f"l{i}" for i in range(L)), counts)
        assert abs(weighted_precision(cm) - precision_oracle(counts)) <= 1e-12
        assert abs(accuracy(cm) - np.trace(counts) / counts.sum()) <= 1e-12


def test_empty_confusion():
    cm = ConfusionCounts.from_predictions([], [], LABELS)
    with pytest.raises(EmptyEvaluation):
        weighted_precision(cm)
    with pytest.raises(EmptyEvaluation):
        accuracy(cm)


def bags_for(seed, n=20, k=4, sep=3.0, d=4):
    return generate_planted(SynthSpec(profiles_per_class=n, instances_per_bag=k,
                                      separation=sep, dimension=d, seed=seed))


def test_folds_partition_profiles():
    bags = bags_for(0, n=13)
    folds = assign_folds(bags, 5, seed=1)
    assert sorted(set(folds)) == list(range(5))
    sizes = np.bincount(folds)
    assert sizes.max() - sizes.min() <= 1
    for f in range(5):
        labels = [b.gold_label for b, k in zip(bags, folds) if k == f]
        assert set(labels) == set(LABELS)


def test_single_grid_point_skips_search():
    cv = cross_validate(bags_for(0), "svm_linear", GridSpec({"C": [1.0]}))
    assert cv.best == {"C": 1.0} and cv.experiments == 0


@pytest.mark.parametrize("kind", ["logreg", "svm_linear"])
def test_cv_picks_first_best_grid_point(kind):
    bags = bags_for(1, n=25, sep=4.0)
    cv = cross_validate(bags, kind, GridSpec({"C": [1e-9, 1.0, 10.0]}), folds=5, seed=0,
                        mapping=M)
    top = max(s for _, s in cv.scores)
    assert cv.best == next(p for p, s in cv.scores if s == top)
    assert cv.experiments == 15


def test_grid_for_restricts_parameters():
    assert grid_for("nb", {"C": [1.0]}).values == {}
    assert grid_for("svm_rbf", {"C": [2.0]}).values["C"] == [2.0]
    assert len(grid_for("svm_rbf", None).points()) == 20


def small_cfg(**kw):
    base = dict(classifier="svm_linear", bag_size=4, runs=2, seed=5, grid={"C": [0.1, 1.0]})
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_deterministic():
    bags = bags_for(2)
    a = run_experiment(bags, small_cfg())
    b = run_experiment(bags, small_cfg())
    assert a.to_json() == b.to_json()
    assert a.config["seeds"] == [5, 6]
    assert 0.0 <= a.precision <= 1.0 and len(a.runs) == 2


def test_experiment_drops_short_profiles():
    bags = bags_for(3) + [Bag("short", np.zeros((2, 4)), "male")]
    rep = run_experiment(bags, small_cfg(runs=1))
    assert rep.config["profiles"] == 40


def test_misvm_equals_linear_svm_at_bag_size_one():
    bags = bags_for(4, n=25, k=3, sep=2.0)
    cfg = dict(bag_size=1, runs=2, grid={"C": [0.1, 1.0]})
    lin = run_experiment(bags, small_cfg(classifier="svm_linear", **cfg))
    mi = run_experiment(bags, small_cfg(classifier="misvm", **cfg))
    assert [(r.precision, r.accuracy) for r in lin.runs] == [(r.precision, r.accuracy) for r in mi.runs]


def test_standardisation_runs():
    rep = run_experiment(bags_for(5), small_cfg(classifier="nb", standardize=True, runs=1))
    assert rep.experiments == 0 and 0.0 <= rep.accuracy <= 1.0


def test_sweep_shape_and_csv():
    bags = bags_for(6, n=10, k=5)
    res = sweep({"deep": bags}, ["nb", "svm_linear"], [1, 5, 6],
                small_cfg(runs=2, grid={"C": [1.0]}))
    # bag size 6 exceeds every profile: that cell fails, the rest run
    assert len(res.reports) == 4 and len(res.failures) == 2
    rows = list(csv.reader(io.StringIO(res.merged_csv())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 4 * 2
    assert [r[0] for r in rows[1:]] == ["nb"] * 4 + ["svm_linear"] * 4


def fake(classifier, k, p):
    return EvalReport({"classifier": classifier, "bag_size": k, "feature_space": "deep"},
                      [], p, p, 0, 0)


def test_best_per_classifier():
    reps = [fake("nb", 1, 0.6), fake("svm_linear", 1, 0.7), fake("nb", 12, 0.8),
            fake("svm_linear", 12, 0.7)]
    best = best_per_classifier(reps)
    assert [(r.classifier, r.bag_size) for r in best] == [("nb", 12), ("svm_linear", 1)]
    text = format_summary(reps)
    assert "NB-Gaussian" in text and "SVM-linear" in text


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(classifier="tree")
    with pytest.raises(ValueError):
        ExperimentConfig(bag_size=0)
