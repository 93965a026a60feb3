"""Profile manifests, precomputed feature tables and crowd-label adjudication.

Manifest: newline-delimited JSON, one profile per line::

    {"profile_id": "u1", "images": ["a.jpg", "b.jpg"],
     "annotations": [{"worker_id": "w1", "account_type": "individual", "gender": "female"}]}

An adjudicated manifest additionally carries ``"label"``.

Feature table: CSV with header ``path,f0,...,f{D-1}``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Bag
from .errors import (
    DimensionMismatch,
    DuplicateProfile,
    InvalidValue,
    MalformedAnnotations,
    ManifestParseError,
)

log = logging.getLogger(__name__)

ACCOUNT_TYPES = ("individual", "non_individual", "cannot_guess")
GENDER_ANSWERS = ("female", "male", "cannot_guess")


@dataclass(frozen=True)
class AnnotationRecord:
    worker_id: str
    account_type: str
    gender: Optional[str] = None

    def __post_init__(self):
        if self.account_type not in ACCOUNT_TYPES:
            raise ValueError(f"unknown account_type {self.account_type!r}")
        if self.gender is not None:
            if self.account_type != "individual":
                raise ValueError("gender is only answered for individual accounts")
            if self.gender not in GENDER_ANSWERS:
                raise ValueError(f"unknown gender answer {self.gender!r}")

    def to_dict(self):
        return {"worker_id": self.worker_id, "account_type": self.account_type,
                "gender": self.gender}


@dataclass(frozen=True)
class ProfileManifestEntry:
    profile_id: str
    images: tuple
    annotations: tuple = ()
    label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        if not self.images:
            raise ValueError(f"profile {self.profile_id!r} lists no images")
        if len(set(self.images)) != len(self.images):
            raise ValueError(f"profile {self.profile_id!r} lists an image twice")

    def to_dict(self):
        doc = {"profile_id": self.profile_id, "images": list(self.images)}
        if self.annotations:
            doc["annotations"] = [a.to_dict() for a in self.annotations]
        if self.label is not None:
            doc["label"] = self.label
        return doc


def _parse_entry(obj) -> ProfileManifestEntry:
    if not isinstance(obj, dict):
        raise ValueError("each line must be a JSON object")
    pid = obj.get("profile_id")
    images = obj.get("images")
    if not isinstance(pid, str):
        raise ValueError("'profile_id' must be a string")
    if not isinstance(images, list) or not all(isinstance(p, str) for p in images):
        raise ValueError("'images' must be an array of strings")
    anns = obj.get("annotations", [])
    if not isinstance(anns, list):
        raise ValueError("'annotations' must be an array")
    records = []
    for a in anns:
        if not isinstance(a, dict):
            raise ValueError("annotation must be an object")
        records.append(AnnotationRecord(str(a.get("worker_id", "")), a.get("account_type"),
                                        a.get("gender")))
    label = obj.get("label")
    if label is not None and not isinstance(label, str):
        raise ValueError("'label' must be a string")
    return ProfileManifestEntry(pid, tuple(images), tuple(records), label)


def load_manifest(path) -> list:
    entries, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entry = _parse_entry(json.loads(line))
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                raise ManifestParseError(str(exc), lineno) from exc
            if entry.profile_id in seen:
                raise DuplicateProfile(f"line {lineno}: profile {entry.profile_id!r} repeated")
            seen.add(entry.profile_id)
            entries.append(entry)
    return entries


def write_manifest(entries: Sequence[ProfileManifestEntry], path):
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# adjudication

def _agreed_answer(answers, judgements, min_agreement):
    """Most common answer if it reaches the agreement threshold and is unique."""
    counts = Counter(a for a in answers if a is not None)
    if not counts:
        return None
    top = max(counts.values())
    winners = [a for a, c in counts.items() if c == top]
    if len(winners) != 1 or top < min_agreement * judgements - 1e-12:
        return None
    return winners[0]


def adjudicate_entry(entry: ProfileManifestEntry, min_agreement=0.6, judgements=3):
    """Return ``(label, None)`` for a retained profile or ``(None, reason)``."""
    if len(entry.annotations) != judgements:
        raise MalformedAnnotations(
            f"profile {entry.profile_id!r} has {len(entry.annotations)} annotations, "
            f"expected {judgements}")
    account = _agreed_answer([a.account_type for a in entry.annotations], judgements, min_agreement)
    if account is None:
        return None, "account_type_disagreement"
    if account != "individual":
        return None, account
    gender = _agreed_answer([a.gender for a in entry.annotations], judgements, min_agreement)
    if gender is None:
        return None, "gender_disagreement"
    if gender == "cannot_guess":
        return None, "gender_cannot_guess"
    return gender, None


def adjudicate(entries: Sequence[ProfileManifestEntry], min_agreement: float = 0.6,
               judgements: int = 3) -> list:
    """Gold labels for profiles whose crowd answers agree.

    Both the account-type and the gender question must reach
    ``min_agreement`` (fraction of ``judgements``); profiles whose agreed
    account type is not ``individual`` or whose agreed gender is
    ``cannot_guess`` are excluded.
    """
    if not 0 < min_agreement <= 1:
        raise ValueError("min_agreement must lie in (0, 1]")
    if judgements < 1:
        raise ValueError("judgements must be >= 1")
    out = []
    for e in entries:
        label, _ = adjudicate_entry(e, min_agreement, judgements)
        if label is not None:
            out.append((e.profile_id, label))
    return out


def exclusion_reasons(entries, min_agreement=0.6, judgements=3) -> dict:
    reasons = {}
    for e in entries:
        _, why = adjudicate_entry(e, min_agreement, judgements)
        if why is not None:
            reasons[e.profile_id] = why
    return reasons


# ---------------------------------------------------------------------------
# feature tables

@dataclass
class FeatureTable:
    feature_space: str
    dimension: int
    rows: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise DimensionMismatch("feature tables need D > 0")
        for path, v in self.rows.items():
            v = np.asarray(v, dtype=float)
            if v.shape != (self.dimension,):
                raise DimensionMismatch(f"row {path!r} has length {v.size}, expected {self.dimension}")
            if not np.all(np.isfinite(v)):
                raise InvalidValue(f"row {path!r} has non-finite values")
            self.rows[path] = v


def load_feature_table(path, expected_space: str) -> FeatureTable:
    rows = {}
    dim = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not header or header[0] != "path":
            raise ManifestParseError("feature table must start with a 'path,f0,...' header", 1)
        expected = [f"f{j}" for j in range(len(header) - 1)]
        if header[1:] != expected:
            raise ManifestParseError("feature columns must be named f0..f{D-1}", 1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            values = rec[1:]
            if dim is None:
                dim = len(values)
                if dim != len(header) - 1:
                    raise DimensionMismatch(f"line {lineno}: {dim} values under a {len(header) - 1}-column header")
            if len(values) != dim:
                raise DimensionMismatch(f"line {lineno}: {len(values)} values, expected {dim}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as exc:
                raise InvalidValue(f"line {lineno}: {exc}") from exc
            if not np.all(np.isfinite(vec)):
                raise InvalidValue(f"line {lineno}: non-finite value")
            if rec[0] in rows:
                raise DuplicateProfile(f"line {lineno}: image {rec[0]!r} repeated")
            rows[rec[0]] = vec
    if dim is None:
        dim = len(header) - 1
    return FeatureTable(expected_space, dim, rows)


def write_feature_table(table: FeatureTable, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path"] + [f"f{j}" for j in range(table.dimension)])
        for p, v in table.rows.items():
            w.writerow([p] + [repr(float(x)) for x in v])


def build_bags(entries: Sequence[ProfileManifestEntry], table: FeatureTable,
               labels: Optional[dict] = None) -> list:
    """Assemble bags from manifest order; images without a feature row are skipped.

    ``labels`` maps profile id to gold label and defaults to each entry's
    own ``label`` field.
    """
    bags = []
    for e in entries:
        label = labels.get(e.profile_id) if labels is not None else e.label
        vecs = [table.rows[p] for p in e.images if p in table.rows]
        missing = len(e.images) - len(vecs)
        if missing:
            log.warning("profile %s: %d image(s) without features", e.profile_id, missing)
        if not vecs:
            continue
        bags.append(Bag(e.profile_id, np.vstack(vecs), label, table.feature_space))
    return bags
