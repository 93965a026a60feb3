"""Synthetic bags with planted discriminative instances."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .core import Bag, DEFAULT_LABELS, derive_rng
from .errors import InvalidSpec


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings.

    Each bag holds ``ceil((1 - noise_fraction) * instances_per_bag)``
    discriminative instances drawn from ``N(+-separation/2 * u, I)`` (u a
    unit vector, sign by class); the rest are class-independent ``N(0, I)``
    noise.
    """

    profiles_per_class: int = 100
    instances_per_bag: int = 12
    noise_fraction: float = 0.4
    separation: float = 2.0
    dimension: int = 8
    seed: int = 0
    labels: tuple = DEFAULT_LABELS
    feature_space: str = "deep"

    def validate(self):
        if self.profiles_per_class < 1 or self.instances_per_bag < 1 or self.dimension < 1:
            raise InvalidSpec("profiles_per_class, instances_per_bag and dimension must be >= 1")
        if not 0 <= self.noise_fraction < 1:
            raise InvalidSpec("noise_fraction must lie in [0, 1)")
        if not self.separation > 0:
            raise InvalidSpec("separation must be positive")
        if len(self.labels) != 2 or self.labels[0] == self.labels[1]:
            raise InvalidSpec("exactly two distinct labels are required")

    @property
    def discriminative_per_bag(self) -> int:
        return math.ceil((1.0 - self.noise_fraction) * self.instances_per_bag - 1e-12)


def generate_planted(spec: SynthSpec, return_masks=False):
    """Bags for ``spec.labels[0]`` (the +u side) first, then ``spec.labels[1]``.

    With ``return_masks`` also returns, per bag, a boolean array marking the
    discriminative instances.
    """
    spec.validate()
    rng = derive_rng(spec.seed, "planted")
    k, D = spec.instances_per_bag, spec.dimension
    n_disc = spec.discriminative_per_bag
    u = np.ones(D) / math.sqrt(D)
    bags, masks = [], []
    for c, label in enumerate(spec.labels):
        centre = (0.5 if c == 0 else -0.5) * spec.separation * u
        for p in range(spec.profiles_per_class):
            X = rng.standard_normal((k, D))
            mask = np.zeros(k, dtype=bool)
            mask[rng.permutation(k)[:n_disc]] = True
            X[mask] += centre
            pid = f"p{c * spec.profiles_per_class + p:05d}"
            bags.append(Bag(pid, X, label, spec.feature_space))
            masks.append(mask)
    if return_masks:
        return bags, masks
    return bags


def separation_for_accuracy(target: float, noise_fraction: float, instances_per_bag: int) -> float:
    """Class separation at which the Bayes-optimal instance classifier reaches ``target``.

    Noise instances are guessed at chance, discriminative ones are correct
    with probability ``Phi(separation / 2)``.
    """
    spec = SynthSpec(instances_per_bag=instances_per_bag, noise_fraction=noise_fraction)
    frac = spec.discriminative_per_bag / instances_per_bag
    p = (target - 0.5 * (1.0 - frac)) / frac
    if not 0.5 < p < 1:
        raise InvalidSpec(f"accuracy {target} unreachable with noise fraction {noise_fraction}")
    return float(2.0 * norm.ppf(p))


def write_planted(bags, directory) -> tuple:
    """Write bags as a labeled manifest plus feature table; returns both paths."""
    from .ingest import FeatureTable, ProfileManifestEntry, write_feature_table, write_manifest

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries, rows = [], {}
    for bag in bags:
        paths = [f"{bag.profile_id}/img{j:02d}" for j in range(len(bag))]
        entries.append(ProfileManifestEntry(bag.profile_id, tuple(paths), label=bag.gold_label))
        rows.update(zip(paths, bag.instances))
    manifest = directory / "manifest.jsonl"
    table = directory / f"features_{bags[0].feature_space}.csv"
    write_manifest(entries, manifest)
    write_feature_table(FeatureTable(bags[0].feature_space, bags[0].dimension, rows), table)
    return manifest, table


PALETTES = {
    # dominant channel differs, value range matched
    "warm": ((150, 256), (40, 160), (0, 70)),
    "cool": ((0, 70), (40, 160), (150, 256)),
}


def _palette_colour(rng, palette):
    return np.array([rng.integers(lo, hi) for lo, hi in PALETTES[palette]], dtype=np.uint8)


def palette_image(rng, palette: str, size: int = 48, shapes: int = 6) -> np.ndarray:
    """Random rectangles and discs in palette colours on a palette background.

    Geometry is drawn independently of the palette, so only colour carries
    the class.
    """
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:] = _palette_colour(rng, palette)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(shapes):
        cy, cx = rng.integers(0, size, 2)
        r = rng.integers(size // 10, size // 3)
        if rng.random() < 0.5:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        else:
            mask = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= rng.integers(size // 10, size // 3))
        img[mask] = _palette_colour(rng, palette)
    return img


def generate_palette_corpus(profiles_per_class: int = 30, images_per_profile: int = 5,
                            size: int = 48, seed: int = 0, labels: tuple = DEFAULT_LABELS):
    """``[(profile_id, label, [HxWx3 uint8 arrays])]``; labels[0] uses the warm palette."""
    rng = derive_rng(seed, "palette")
    out = []
    for c, (label, palette) in enumerate(zip(labels, ("warm", "cool"))):
        for p in range(profiles_per_class):
            pid = f"p{c * profiles_per_class + p:05d}"
            out.append((pid, label, [palette_image(rng, palette, size)
                                     for _ in range(images_per_profile)]))
    return out
