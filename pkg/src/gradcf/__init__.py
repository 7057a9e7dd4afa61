"""Counterfactual explanation sets with gradient-accumulated feature
attribution for tabular neural classifiers."""

__version__ = "0.1.0"

from .attribution import AttributionReport, GradientHistory, compute_attributions
from .data import PreparedDataset, TabularPreprocessor, load_dataset, prepare
from .engine import (Constraints, CounterfactualExplainer, CounterfactualResult,
                     Hyperparameters, InfeasibleConstraintsError, generate)
from .evaluation import MetricsReport, evaluate_set
from .losses import LossBreakdown, LossWeights, PenaltyConfig
from .network import DenseClassifier, NeuralNet, Prediction, load_model, save_model
from .schema import Feature, FeatureSchema

__all__ = [
    "AttributionReport", "Constraints", "CounterfactualExplainer",
    "CounterfactualResult", "DenseClassifier", "Feature", "FeatureSchema",
    "GradientHistory", "Hyperparameters", "InfeasibleConstraintsError",
    "LossBreakdown", "LossWeights", "MetricsReport", "NeuralNet",
    "PenaltyConfig", "PreparedDataset", "Prediction", "TabularPreprocessor",
    "compute_attributions", "evaluate_set", "generate", "load_dataset",
    "load_model", "prepare", "save_model",
]
