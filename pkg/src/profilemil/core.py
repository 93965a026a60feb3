"""Bag-of-instances data model, label/sign mapping, sampling and splitting."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InsufficientInstances,
    InvalidValue,
    MissingLabel,
    SplitTooSmall,
    UnknownLabel,
)

FEATURE_SPACES = ("hoc", "hog", "gist", "deep")
DEFAULT_LABELS = ("female", "male")


def _key_to_int(key) -> int:
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator that is a pure function of ``seed`` and the string form of ``keys``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class SignMapping:
    """Bijection between the two class names and {-1, +1}."""

    positive: str = "female"
    negative: str = "male"

    def __post_init__(self):
        if self.positive == self.negative:
            raise ValueError("positive and negative labels must differ")

    @property
    def labels(self) -> tuple:
        return (self.positive, self.negative)

    def swapped(self) -> "SignMapping":
        return SignMapping(self.negative, self.positive)


def to_signed(label: str, mapping: SignMapping) -> int:
    if label == mapping.positive:
        return 1
    if label == mapping.negative:
        return -1
    raise UnknownLabel(f"label {label!r} not in {mapping.labels}")


def from_signed(sign: int, mapping: SignMapping) -> str:
    if sign == 1:
        return mapping.positive
    if sign == -1:
        return mapping.negative
    raise ValueError(f"sign must be -1 or +1, got {sign!r}")


def sign_of(value: float) -> int:
    # exact zero goes to the positive class
    return 1 if value >= 0 else -1


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    feature_space: str = "deep"

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0:
            raise DimensionMismatch("feature vector must have D > 0")
        if not np.all(np.isfinite(v)):
            raise InvalidValue("feature vector has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dimension(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Bag:
    """One profile: an ``(n, D)`` instance matrix plus an optional gold label."""

    profile_id: str
    instances: np.ndarray
    gold_label: Optional[str] = None
    feature_space: str = "deep"

    def __post_init__(self):
        X = np.array(self.instances, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise DimensionMismatch(
                f"bag {self.profile_id!r} needs a non-empty (n, D) instance matrix"
            )
        if not np.all(np.isfinite(X)):
            raise InvalidValue(f"bag {self.profile_id!r} has non-finite features")
        X.setflags(write=False)
        object.__setattr__(self, "instances", X)

    @classmethod
    def from_vectors(cls, profile_id, vectors: Sequence[FeatureVector], gold_label=None):
        spaces = {v.feature_space for v in vectors}
        if len(spaces) > 1:
            raise DimensionMismatch(f"mixed feature spaces in bag {profile_id!r}: {spaces}")
        dims = {v.dimension for v in vectors}
        if len(dims) > 1:
            raise DimensionMismatch(f"mixed dimensions in bag {profile_id!r}: {dims}")
        space = spaces.pop() if spaces else "deep"
        return cls(profile_id, np.vstack([v.values for v in vectors]), gold_label, space)

    def __len__(self):
        return self.instances.shape[0]

    @property
    def dimension(self) -> int:
        return self.instances.shape[1]

    def vectors(self) -> list:
        return [FeatureVector(row, self.feature_space) for row in self.instances]

    def with_instances(self, X) -> "Bag":
        return Bag(self.profile_id, X, self.gold_label, self.feature_space)


@dataclass(frozen=True)
class Dataset:
    bags: tuple
    split: tuple
    seed: int
    labels: tuple = DEFAULT_LABELS

    def __post_init__(self):
        object.__setattr__(self, "bags", tuple(self.bags))
        object.__setattr__(self, "split", tuple(self.split))
        if len(self.bags) != len(self.split):
            raise ValueError("one split tag per bag required")
        if set(self.split) - {"train", "test"}:
            raise ValueError("split tags must be 'train' or 'test'")
        train_ids = {b.profile_id for b, s in zip(self.bags, self.split) if s == "train"}
        test_ids = {b.profile_id for b, s in zip(self.bags, self.split) if s == "test"}
        if train_ids & test_ids:
            raise ValueError("a profile appears in both train and test")

    @property
    def train(self) -> list:
        return [b for b, s in zip(self.bags, self.split) if s == "train"]

    @property
    def test(self) -> list:
        return [b for b, s in zip(self.bags, self.split) if s == "test"]


def check_dimensions(bags: Sequence[Bag]) -> int:
    dims = {b.dimension for b in bags}
    if len(dims) != 1:
        raise DimensionMismatch(f"bags disagree on dimension: {sorted(dims)}")
    return dims.pop()


def label_vocabulary(bags: Sequence[Bag], mapping: Optional[SignMapping] = None) -> tuple:
    if mapping is not None:
        return mapping.labels
    seen = sorted({b.gold_label for b in bags if b.gold_label is not None})
    return tuple(seen)


def train_size(n: int, train_fraction: float) -> int:
    return int(math.floor(train_fraction * n + 0.5))


def split_dataset(bags: Sequence[Bag], train_fraction: float = 0.8, seed: int = 0,
                  labels: tuple = DEFAULT_LABELS) -> Dataset:
    """Shuffle profiles and assign ``round(train_fraction * n)`` of them to train."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    bags = list(bags)
    for b in bags:
        if b.gold_label is None:
            raise MissingLabel(f"bag {b.profile_id!r} is unlabeled")
    ids = [b.profile_id for b in bags]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate profile ids")
    n = len(bags)
    n_train = train_size(n, train_fraction)
    if n < 2 or n_train < 1 or n_train > n - 1:
        raise SplitTooSmall(f"{n} bags cannot be split {train_fraction:g}/{1 - train_fraction:g}")
    order = derive_rng(seed, "split").permutation(n)
    split = ["test"] * n
    for i in order[:n_train]:
        split[i] = "train"
    return Dataset(tuple(bags), tuple(split), seed, labels)


def sample_bag_subset(bag: Bag, k: int, seed: int) -> Bag:
    """Draw ``k`` distinct instances uniformly without replacement.

    The draw is keyed on ``(profile_id, seed)`` and takes a prefix of one
    permutation, so subsets for increasing ``k`` are nested.
    """
    n = len(bag)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise InsufficientInstances(f"bag {bag.profile_id!r} has {n} < {k} instances")
    if k == n:
        return bag
    idx = np.sort(derive_rng(seed, "subset", bag.profile_id).permutation(n)[:k])
    return bag.with_instances(bag.instances[idx])


def subsample_bags(bags: Sequence[Bag], k: int, seed: int) -> list:
    """Subsample every bag to ``k`` instances, dropping profiles that are too small."""
    return [sample_bag_subset(b, k, seed) for b in bags if len(b) >= k]
