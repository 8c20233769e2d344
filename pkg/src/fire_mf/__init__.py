"""Multi-fidelity regression toolkit.

Two-stage distribution-conditioned residual learning over pluggable
probabilistic surrogates, classical autoregressive GP baselines, a
benchmark-problem catalog with an imbalance split protocol, and the
metric/aggregation stack used to compare algorithms.
"""

from fire_mf.core import (
    FidelityBlock,
    MultiFidelityDataset,
    PredictiveSummary,
    QuantileLevels,
    Standardizer,
    TokenizedBlock,
    aggregate_bilevel,
    load_dataset_csv,
)
from fire_mf.fire import (
    AugmentationMode,
    FireModel,
    build_augmented_features,
    fire_fit,
    fire_fit_recursive,
    fire_predict,
)
from fire_mf.gp import GPSurrogate, KernelSpec, gp_fit, gp_predict
from fire_mf.metrics import MetricRecord, elo_ratings, nll, nrmse, r2

__all__ = [
    "AugmentationMode",
    "FidelityBlock",
    "FireModel",
    "GPSurrogate",
    "KernelSpec",
    "MetricRecord",
    "MultiFidelityDataset",
    "PredictiveSummary",
    "QuantileLevels",
    "Standardizer",
    "TokenizedBlock",
    "aggregate_bilevel",
    "build_augmented_features",
    "elo_ratings",
    "fire_fit",
    "fire_fit_recursive",
    "fire_predict",
    "gp_fit",
    "gp_predict",
    "load_dataset_csv",
    "nll",
    "nrmse",
    "r2",
]
