"""Desk-scale lab for sharpness-aware training with multi-step ascent."""

__version__ = "0.1.0"

from .autodiff import CompGraph, backward, hessian_vector_product  # noqa: E402
from .data import Dataset, DatasetSpec, batch_iterator, generate_dataset  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    DegenerateDirectionError,
    DomainError,
    GraphStateError,
    NumericalAbort,
    SamlabError,
)
from .models import MLP, Batch, ModelSpec, init_params  # noqa: E402
from .optim import AscentConfig, OptimizerConfig, ascent_multi, ascent_single, step  # noqa: E402

__all__ = [
    "AscentConfig",
    "Batch",
    "CompGraph",
    "ConfigError",
    "Dataset",
    "DatasetSpec",
    "DegenerateDirectionError",
    "DomainError",
    "GraphStateError",
    "MLP",
    "ModelSpec",
    "NumericalAbort",
    "OptimizerConfig",
    "SamlabError",
    "ascent_multi",
    "ascent_single",
    "backward",
    "batch_iterator",
    "generate_dataset",
    "hessian_vector_product",
    "init_params",
    "step",
]
