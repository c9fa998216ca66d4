"""Cascade forests of weighted gradient-boosted trees for imbalanced binary
classification."""
from .cascade import CascadeConfig, CascadeModel, predict_cascade, train_cascade
from .dataio import DataError, Dataset, kfold_split, load_csv, synth_imbalanced
from .mart import MartModel, MartParams, train_mart
from .metrics import auc, evaluate, ks, pr_curve, recall_at_rate
from .modelio import RunConfig, load_model, save_model
from .sketch import QuantileSketch, sketch_build, sketch_merge

__version__ = "0.1.0"

__all__ = [
    "CascadeConfig", "CascadeModel", "DataError", "Dataset", "MartModel", "MartParams",
    "QuantileSketch", "RunConfig", "auc", "evaluate", "kfold_split", "ks", "load_csv",
    "load_model", "pr_curve", "predict_cascade", "recall_at_rate", "save_model",
    "sketch_build", "sketch_merge", "synth_imbalanced", "train_cascade", "train_mart",
]
