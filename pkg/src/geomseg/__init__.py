"""Exact multivariate change-point detection with geometric functional pruning."""

from .dp import Segmentation, SolveTimeout, backtrack, op_solve, pelt_solve
from .geomfpop import FutureSelect, PastSelect, PruningConfig, PruningKind, geomfpop_solve
from .model_cost import CostModel, TimeSeriesMatrix, default_penalty, estimate_sigma, load_csv

__all__ = [
    "CostModel",
    "FutureSelect",
    "PastSelect",
    "PruningConfig",
    "PruningKind",
    "Segmentation",
    "SolveTimeout",
    "TimeSeriesMatrix",
    "backtrack",
    "default_penalty",
    "estimate_sigma",
    "geomfpop_solve",
    "load_csv",
    "op_solve",
    "pelt_solve",
]

__version__ = "0.1.0"
