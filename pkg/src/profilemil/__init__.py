"""Gender inference over bags of profile images.

Profiles are bags of per-image feature vectors. Bags are classified either
by training an instance classifier on propagated labels and voting, or by
MI-SVM, which scores a bag by its best instance.
"""
from .core import Bag, Dataset, FeatureVector, SignMapping, split_dataset, subsample_bags
from .evaluation import ExperimentConfig, EvalReport, run_experiment, sweep
from .mil import MisvmConfig, MisvmModel, train_misvm
from .synth import SynthSpec, generate_planted

__version__ = "0.1.0"

__all__ = [
    "Bag", "Dataset", "FeatureVector", "SignMapping", "split_dataset", "subsample_bags",
    "ExperimentConfig", "EvalReport", "run_experiment", "sweep",
    "MisvmConfig", "MisvmModel", "train_misvm", "SynthSpec", "generate_planted",
]
