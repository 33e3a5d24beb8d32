"""Signed-graph attention networks with an unsigned-graph reconstruction decoder."""

from .graphs import (NeighborSets, SignedGraph, Subject, UnsignedGraph,
                     balance_oracle, neighbor_sets, node_features_from_series,
                     normalize_functional, normalize_structural, split_signed)
from .kernels import active_backend
from .model import (DsbnConfig, ModelOutput, ModelParams, init_model_params,
                    metrics_report, named_params, params_from_arrays, predict,
                    prepare_dataset, prepare_subject, reconstruction_mae,
                    saliency_map, threshold_reconstruction)
from .synth import SynthConfig, generate_dataset, generate_subject
from .trainer import TrainConfig, cross_validate, kfold_split, lr_at, train

__version__ = "0.1.0"

__all__ = [
    "DsbnConfig", "ModelOutput", "ModelParams", "NeighborSets", "SignedGraph",
    "Subject", "SynthConfig", "TrainConfig", "UnsignedGraph", "active_backend",
    "balance_oracle", "cross_validate", "generate_dataset", "generate_subject",
    "init_model_params", "kfold_split", "lr_at", "metrics_report",
    "named_params", "neighbor_sets", "node_features_from_series",
    "normalize_functional", "normalize_structural", "params_from_arrays",
    "predict", "prepare_dataset", "prepare_subject", "reconstruction_mae",
    "saliency_map", "split_signed", "threshold_reconstruction", "train",
    "__version__",
]
