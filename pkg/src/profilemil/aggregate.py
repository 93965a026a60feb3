"""Single-instance learning over bags: label propagation and majority voting."""
from __future__ import annotations

from collections import Counter
from typing import Sequence

import numpy as np

from .classifiers import predict_signs
from .core import Bag, SignMapping, derive_rng, from_signed, to_signed
from .errors import EmptyBag, MissingLabel, UnknownLabel


def propagate_labels(bags: Sequence[Bag]) -> list:
    """Pair every instance with its bag's label, in bag then instance order."""
    out = []
    for bag in bags:
        if bag.gold_label is None:
            raise MissingLabel(f"bag {bag.profile_id!r} is unlabeled")
        out.extend((row, bag.gold_label) for row in bag.instances)
    return out


def propagated_arrays(bags: Sequence[Bag], mapping: SignMapping):
    """Stacked ``(X, y)`` with signed labels, ready for a classifier."""
    if not bags:
        return np.empty((0, 0)), np.empty(0)
    for bag in bags:
        if bag.gold_label is None:
            raise MissingLabel(f"bag {bag.profile_id!r} is unlabeled")
    X = np.vstack([b.instances for b in bags])
    y = np.concatenate([np.full(len(b), float(to_signed(b.gold_label, mapping))) for b in bags])
    return X, y


def vote_counts(predictions, labels) -> dict:
    counts = Counter(predictions)
    unknown = set(counts) - set(labels)
    if unknown:
        raise UnknownLabel(f"predictions outside vocabulary: {sorted(unknown)}")
    return {l: counts.get(l, 0) for l in labels}


def majority_vote(predictions: Sequence[str], labels: Sequence[str], seed: int,
                  return_tie=False):
    """Label predicted most often; exact ties are broken uniformly at random.

    The tie draw depends only on ``seed`` and the set of tied labels, so the
    result does not depend on the order of ``predictions``.
    """
    if len(predictions) == 0:
        raise EmptyBag("cannot vote over an empty prediction list")
    counts = vote_counts(predictions, labels)
    top = max(counts.values())
    tied = sorted(l for l, c in counts.items() if c == top)
    if len(tied) == 1:
        winner = tied[0]
    else:
        winner = tied[int(derive_rng(seed, "tie", *tied).integers(len(tied)))]
    if return_tie:
        return winner, len(tied) > 1
    return winner


def bag_vote_seed(profile_id: str, seed: int) -> int:
    return int(derive_rng(seed, "vote", profile_id).integers(2 ** 63))


def predict_bag_sil(model, bag: Bag, mapping: SignMapping, seed: int, return_tie=False):
    signs = predict_signs(model, bag.instances)
    preds = [from_signed(int(s), mapping) for s in signs]
    return majority_vote(preds, mapping.labels, bag_vote_seed(bag.profile_id, seed),
                         return_tie=return_tie)
