"""Learnable functional-connectivity graphs from multivariate time series.

Pipeline: per-ROI time-series encoder -> graph generator with group and
sparsity regularizers -> GCN classifier, trained end to end, plus an
interpretability suite that ranks functional modules by their
class-discriminative edges.
"""
from . import dataset, encoders, graphgen, interpret, nncore, predictor, training

__all__ = [
    "dataset",
    "encoders",
    "graphgen",
    "interpret",
    "nncore",
    "predictor",
    "training",
]

__version__ = "0.1.0"
