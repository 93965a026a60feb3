"""MI-SVM: bag-level max-margin training by alternating witness selection.

A positive bag is represented by a single *witness* instance; every
instance of a negative bag is a negative example. Training alternates
between solving a linear SVM for fixed witnesses and re-choosing each
positive bag's witness as its highest scoring instance. This is a local
heuristic for the underlying mixed-integer program, not a global solver:
it can stop at a witness fixpoint whose objective is well above the
optimum.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .classifiers import LinearModel, TrainConfig, decision_values, train_linear_svm
from .core import Bag, SignMapping, check_dimensions, from_signed, sign_of, to_signed
from .errors import DimensionMismatch, MissingClass, MissingLabel


INIT_METHODS = ("bag_mean", "centroid")


@dataclass(frozen=True)
class MisvmConfig:
    """``init="bag_mean"`` starts from each positive bag's mean as a pseudo
    witness; ``"centroid"`` starts from the instance nearest the centroid of
    positive-bag means."""

    C: float = 1.0
    max_outer_iterations: int = 50
    inner: TrainConfig = TrainConfig()
    seed: int = 0
    init: str = "bag_mean"

    def __post_init__(self):
        if not self.C > 0 or self.max_outer_iterations < 1:
            raise ValueError("C and max_outer_iterations must be positive")
        if self.init not in INIT_METHODS:
            raise ValueError(f"init must be one of {INIT_METHODS}")

    def inner_config(self) -> TrainConfig:
        return replace(self.inner, C=self.C, seed=self.seed)


@dataclass(frozen=True)
class MisvmModel:
    linear: LinearModel
    iterations: int
    converged: bool
    witnesses: dict
    objective_trace: tuple
    kind: str = "misvm"

    @property
    def dimension(self):
        return self.linear.dimension


def _linear(model) -> LinearModel:
    return model.linear if isinstance(model, MisvmModel) else model


def bag_decision_value(model, bag: Bag) -> float:
    """``max_j <w, x_j> + b`` over the bag's instances."""
    lin = _linear(model)
    if bag.dimension != lin.dimension:
        raise DimensionMismatch(f"bag dimension {bag.dimension} != model {lin.dimension}")
    return float(np.max(bag.instances @ lin.weights + lin.bias))


def functional_margin(model, bag: Bag, signed_label: int) -> float:
    if signed_label not in (-1, 1):
        raise ValueError("signed_label must be -1 or +1")
    return signed_label * bag_decision_value(model, bag)


def predict_bag(model, bag: Bag, mapping: SignMapping) -> str:
    return from_signed(sign_of(bag_decision_value(model, bag)), mapping)


def misvm_objective(w, b, bags: Sequence[Bag], signs, C, witnesses=None) -> float:
    """Soft-margin objective with per-instance slack on negatives.

    Positive bags are scored by the given witness indices, or by their
    best instance when ``witnesses`` is None (the bag-level margin).
    """
    loss = 0.0
    for k, (bag, s) in enumerate(zip(bags, signs)):
        scores = bag.instances @ w + b
        if s < 0:
            loss += np.maximum(0.0, 1.0 + scores).sum()
        else:
            top = scores.max() if witnesses is None else scores[witnesses[k]]
            loss += max(0.0, 1.0 - top)
    return float(0.5 * np.dot(w, w) + C * loss)


def _training_set(bags, signs, witnesses):
    rows, ys = [], []
    for k, (bag, s) in enumerate(zip(bags, signs)):
        if s < 0:
            rows.append(bag.instances)
            ys.append(np.full(len(bag), -1.0))
        else:
            if witnesses is None:
                rows.append(bag.instances.mean(axis=0)[None, :])
            else:
                rows.append(bag.instances[witnesses[k]][None, :])
            ys.append(np.ones(1))
    return np.vstack(rows), np.concatenate(ys)


def initial_witnesses(bags, signs) -> dict:
    """Instance of each positive bag nearest the centroid of positive-bag means."""
    pos = [k for k, s in enumerate(signs) if s > 0]
    centroid = np.mean([bags[k].instances.mean(axis=0) for k in pos], axis=0)
    out = {}
    for k in pos:
        d = ((bags[k].instances - centroid) ** 2).sum(axis=1)
        out[k] = int(np.argmin(d))
    return out


def argmax_witnesses(model, bags, signs) -> dict:
    lin = _linear(model)
    return {k: int(np.argmax(bags[k].instances @ lin.weights + lin.bias))
            for k, s in enumerate(signs) if s > 0}


def fit_witnesses(bags, signs, witnesses, cfg: MisvmConfig) -> LinearModel:
    X, y = _training_set(bags, signs, witnesses)
    return train_linear_svm(X, y, cfg.inner_config())


def _signs(bags, mapping):
    out = []
    for b in bags:
        if b.gold_label is None:
            raise MissingLabel(f"bag {b.profile_id!r} is unlabeled")
        out.append(to_signed(b.gold_label, mapping))
    return out


def train_misvm(bags: Sequence[Bag], cfg: MisvmConfig = MisvmConfig(),
                mapping: SignMapping = SignMapping()) -> MisvmModel:
    bags = list(bags)
    check_dimensions(bags)
    signs = _signs(bags, mapping)
    if not (1 in signs and -1 in signs):
        raise MissingClass("MI-SVM needs positive and negative bags")

    # None stands for the bag-mean pseudo witnesses
    witnesses = initial_witnesses(bags, signs) if cfg.init == "centroid" else None
    model = None
    trace = []
    converged = False
    it = 0
    while it < cfg.max_outer_iterations:
        it += 1
        candidate = fit_witnesses(bags, signs, witnesses, cfg)
        if model is not None and witnesses is not None:
            # keep the previous solution if the inexact inner solve did not improve it
            j_new = misvm_objective(candidate.weights, candidate.bias, bags, signs, cfg.C, witnesses)
            j_old = misvm_objective(model.weights, model.bias, bags, signs, cfg.C, witnesses)
            if j_new > j_old:
                candidate = model
        model = candidate
        trace.append(misvm_objective(model.weights, model.bias, bags, signs, cfg.C))
        updated = argmax_witnesses(model, bags, signs)
        if updated == witnesses:
            converged = True
            break
        witnesses = updated

    named = {bags[k].profile_id: v for k, v in witnesses.items()}
    return MisvmModel(model, it, converged, named, tuple(trace))
