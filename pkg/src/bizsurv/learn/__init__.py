"""Imbalance-aware training, evaluation, ensembles and the ablation grid."""

from .dataset import Dataset, DatasetError, Standardizer, assemble_dataset, stratified_split
from .ensemble import (
    ABLATION_ROWS, FAMILIES, AblationConfig, AblationResult, ablation_table, majority_vote, parse_families, run_ablation,
)
from .metrics import EvalReport, roc_auc
from .models import (
    KINDS, GBDTParams, LRParams, MLPParams, SchemaMismatch, TrainedModel, TrainingError,
    load_model, predict_proba, save_model, train_classifier,
)
from .smote import oversample, smote

__all__ = [
    "ABLATION_ROWS", "FAMILIES", "KINDS", "AblationConfig", "AblationResult", "Dataset", "DatasetError",
    "EvalReport", "GBDTParams", "LRParams", "MLPParams", "SchemaMismatch", "Standardizer", "TrainedModel",
    "TrainingError", "ablation_table", "assemble_dataset", "load_model", "majority_vote", "oversample", "parse_families",
    "predict_proba", "roc_auc", "run_ablation", "save_model", "smote", "stratified_split", "train_classifier",
]
