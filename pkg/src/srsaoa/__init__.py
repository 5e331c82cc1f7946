"""Single-anchor uplink AoA estimation: SRS waveform, ULA channel, subspace
estimators and the Monte-Carlo studies built on top of them."""

from .errors import (
    AoaError,
    ConfigurationError,
    DimensionError,
    FormatError,
    NumericError,
    OrderError,
    ScenarioError,
)
from .waveform import SrsConfig
from .array import UlaGeometry, Path, PathSet, steering_vector
from .subspace import covariance, eigen_sorted, aic_order, mdl_order, ecod_order
from .doa import music, esprit, esprit2d, select_los, crb_single_source
from .scenario import ScenarioSpec, load_scenario

__version__ = "0.1.0"

__all__ = [
    "AoaError",
    "ConfigurationError",
    "DimensionError",
    "FormatError",
    "NumericError",
    "OrderError",
    "ScenarioError",
    "SrsConfig",
    "UlaGeometry",
    "Path",
    "PathSet",
    "steering_vector",
    "covariance",
    "eigen_sorted",
    "aic_order",
    "mdl_order",
    "ecod_order",
    "music",
    "esprit",
    "esprit2d",
    "select_los",
    "crb_single_source",
    "ScenarioSpec",
    "load_scenario",
]
