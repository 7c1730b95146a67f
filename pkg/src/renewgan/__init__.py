"""
Scenario generation for renewable power with deep convolutional GANs
"""

from renewgan.copula import CopulaModel
from renewgan.data import FarmMeta, load_csv, ScenarioDataset, split
from renewgan.evaluation import evaluate, EvalReport
from renewgan.gan import GanConfig, sample, train, TrainedModel
from renewgan.synth import synthesize, SynthConfig
from renewgan.system import ArtifactIOError, ConfigurationError, CorruptArtifactError, NumericalError, RenewganError, UsageError

__all__ = [
    "CopulaModel",
    "FarmMeta", "load_csv", "ScenarioDataset", "split",
    "evaluate", "EvalReport",
    "GanConfig", "sample", "train", "TrainedModel",
    "synthesize", "SynthConfig",
    "ArtifactIOError", "ConfigurationError", "CorruptArtifactError", "NumericalError", "RenewganError", "UsageError",
]
