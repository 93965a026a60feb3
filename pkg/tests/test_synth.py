import math

import numpy as np
import pytest
from scipy.stats import norm

from profilemil.aggregate import predict_bag_sil, propagated_arrays
from profilemil.classifiers import TrainConfig, predict_signs, train_linear_svm
from profilemil.core import SignMapping
from profilemil.errors import InvalidSpec
from profilemil.ingest import build_bags, load_feature_table, load_manifest
from profilemil.synth import SynthSpec, generate_planted, separation_for_accuracy, write_planted

M = SignMapping("female", "male")


def test_deterministic():
    spec = SynthSpec(profiles_per_class=5, seed=3)
    a, b = generate_planted(spec), generate_planted(spec)
    for x, y in zip(a, b):
        assert x.profile_id == y.profile_id
        assert x.instances.tobytes() == y.instances.tobytes()
    c = generate_planted(SynthSpec(profiles_per_class=5, seed=4))
    assert a[0].instances.tobytes() != c[0].instances.tobytes()


def test_class_balance_and_shape():
    bags, masks = generate_planted(SynthSpec(profiles_per_class=7, instances_per_bag=12,
                                             noise_fraction=0.4), return_masks=True)
    labels = [b.gold_label for b in bags]
    assert labels.count("female") == labels.count("male") == 7
    assert all(b.instances.shape == (12, 8) for b in bags)
    # ceil(0.6 * 12) = 8 planted instances per bag
    assert all(m.sum() == 8 for m in masks)


def test_every_bag_has_a_discriminative_instance():
    for nf in (0.0, 0.5, 0.9):
        _, masks = generate_planted(SynthSpec(profiles_per_class=10, instances_per_bag=5,
                                              noise_fraction=nf), return_masks=True)
        assert all(m.any() for m in masks)


def test_easy_family_is_separable():
    bags = generate_planted(SynthSpec(profiles_per_class=50, noise_fraction=0.0, separation=10.0))
    X, y = propagated_arrays(bags, M)
    model = train_linear_svm(X, y, TrainConfig(C=1.0))
    assert np.mean(predict_signs(model, X) == y) >= 0.99


def test_voting_beats_instance_accuracy():
    sep = separation_for_accuracy(0.75, 0.4, 12)
    train = generate_planted(SynthSpec(profiles_per_class=100, separation=sep, seed=0))
    test = generate_planted(SynthSpec(profiles_per_class=100, separation=sep, seed=1))
    model = train_linear_svm(*propagated_arrays(train, M), TrainConfig(C=0.1))
    Xt, yt = propagated_arrays(test, M)
    inst_acc = np.mean(predict_signs(model, Xt) == yt)
    bag_acc = np.mean([predict_bag_sil(model, b, M, 0) == b.gold_label for b in test])
    assert 0.70 <= inst_acc <= 0.78
    assert bag_acc > inst_acc + 0.1


def test_separation_for_accuracy_inverts_bayes_rate():
    sep = separation_for_accuracy(0.75, 0.4, 12)
    frac = math.ceil(0.6 * 12) / 12
    assert frac * norm.cdf(sep / 2) + (1 - frac) * 0.5 == pytest.approx(0.75, abs=1e-12)
    with pytest.raises(InvalidSpec):
        separation_for_accuracy(0.9, 0.8, 12)


@pytest.mark.parametrize("kw", [dict(noise_fraction=1.0), dict(separation=0.0),
                                dict(profiles_per_class=0), dict(labels=("a", "a"))])
def test_invalid_spec(kw):
    with pytest.raises(InvalidSpec):
        generate_planted(SynthSpec(**kw))


def test_write_round_trip(tmp_path):
    bags = generate_planted(SynthSpec(profiles_per_class=3, instances_per_bag=4, dimension=3))
    manifest, table = write_planted(bags, tmp_path)
    back = build_bags(load_manifest(manifest), load_feature_table(table, "deep"))
    assert [b.profile_id for b in back] == [b.profile_id for b in bags]
    for x, y in zip(back, bags):
        np.testing.assert_array_equal(x.instances, y.instances)
        assert x.gold_label == y.gold_label
