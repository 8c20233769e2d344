"""Sidecar process wrapping a tabular foundation model regressor behind the
newline-delimited JSON surrogate protocol."""

from tfm_sidecar.model import GaussianStubAdapter, ModelAdapter, TabPFNAdapter, load_adapter
from tfm_sidecar.server import serve

__all__ = [
    "GaussianStubAdapter",
    "ModelAdapter",
    "TabPFNAdapter",
    "load_adapter",
    "serve",
]
