"""Fairness-aware logistic regression via pairwise gradient reconciliation."""

from fairgrad.data import Dataset, SyntheticSpec, gen_synthetic, load_csv, stratified_kfold
from fairgrad.errors import (
    ConfigError,
    ContractError,
    DataLoadError,
    TrainingError,
    UndefinedMetricError,
    UndefinedRateError,
)
from fairgrad.metrics import MetricsReport, auc, eod_metric, evaluate, pf_score
from fairgrad.model import ModelParams, predict_label, predict_proba
from fairgrad.reconcile import TaskGradient, fairgrad_step, reconcile_gradients
from fairgrad.trainer import TrainConfig, cross_validate, train_fairgrad, train_scalarized, train_vanilla

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "DataLoadError",
    "Dataset",
    "MetricsReport",
    "ModelParams",
    "SyntheticSpec",
    "TaskGradient",
    "TrainConfig",
    "TrainingError",
    "UndefinedMetricError",
    "UndefinedRateError",
    "auc",
    "cross_validate",
    "eod_metric",
    "evaluate",
    "fairgrad_step",
    "gen_synthetic",
    "load_csv",
    "pf_score",
    "predict_label",
    "predict_proba",
    "reconcile_gradients",
    "stratified_kfold",
    "train_fairgrad",
    "train_scalarized",
    "train_vanilla",
]
