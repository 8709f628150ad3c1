"""Kolmogorov-Arnold PointNet: Jacobi-polynomial KAN layers in a PointNet segmentation network."""

from .errors import (
    ConfigError,
    DataError,
    DegenerateRangeError,
    DimensionError,
    KaPointNetError,
    NonFiniteError,
    UnsupportedModeError,
    UsageError,
    VersionMismatchError,
)
from .jacobi import BasisSpec, jacobi_features, jacobi_values
from .model import Model, ModelConfig, build_model, count_trainable_parameters, forward, global_feature
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "ConfigError",
    "DataError",
    "DegenerateRangeError",
    "DimensionError",
    "KaPointNetError",
    "Model",
    "ModelConfig",
    "NonFiniteError",
    "Tensor",
    "UnsupportedModeError",
    "UsageError",
    "VersionMismatchError",
    "build_model",
    "count_trainable_parameters",
    "forward",
    "global_feature",
    "jacobi_features",
    "jacobi_values",
]
