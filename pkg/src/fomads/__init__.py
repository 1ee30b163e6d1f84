"""Single-sensor microgrid fault and cyber-attack diagnosis.

Pipeline: synthetic VPQ waveform generation, dual fractional-order
feature extraction (Caputo + Grünwald-Letnikov), a gated two-stage
hierarchical classifier with a flat fallback, four cyber-attack
injectors, and progressive memory-replay adversarial training with
projected-gradient attacks and online hard example mining.
"""
from .errors import ConfigError, DataError, FomadsError, TrainingError
from .fracdiff import (FractionalKernel, caputo_derivative, caputo_l1_coeffs,
                       gl_derivative, gl_weights, make_kernel)
from .labels import ClassLabel, decode_label, encode_label
from .sigsim import (ScenarioConfig, Waveform, generate_dataset,
                     generate_fault, generate_normal)
from .attacks import AttackSpec, apply
from .features import FeatureNormalizer, FractionalFeatureExtractor, extract_features
from .model import DenseNet, HierarchicalClassifier, HierarchicalModel, train_step
from .pmrat import (CurriculumTrainer, ReplayBuffer, TrainConfig, adaptive_lambda,
                    epsilon_schedule, ohem_select, pgd_attack, replay_sample,
                    total_loss, train_curriculum)
from .evaluate import EvalReport, score_predictions

__version__ = "0.1.0"

__all__ = [
    "AttackSpec", "ClassLabel", "ConfigError", "CurriculumTrainer", "DataError",
    "DenseNet", "EvalReport", "FeatureNormalizer", "FomadsError",
    "FractionalFeatureExtractor", "FractionalKernel", "HierarchicalClassifier",
    "HierarchicalModel", "ReplayBuffer", "ScenarioConfig", "TrainConfig",
    "TrainingError", "Waveform", "adaptive_lambda", "apply", "caputo_derivative",
    "caputo_l1_coeffs", "decode_label", "encode_label", "epsilon_schedule",
    "extract_features", "generate_dataset", "generate_fault", "generate_normal",
    "gl_derivative", "gl_weights", "make_kernel", "ohem_select", "pgd_attack",
    "replay_sample", "score_predictions", "total_loss", "train_curriculum",
    "train_step",
]
