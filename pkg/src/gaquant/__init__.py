"""Generalized additive conditional quantile estimation with an unknown link."""
from .core import (
    Box,
    ConfigError,
    Dataset,
    EstimationError,
    FitConfig,
    QuantileLevel,
    multi_index_set,
)
from .dgp import Component, ErrorLaw, Link, TrueModel, identify_normalize, simulate
from .link import fit_link, predict_quantile
from .marginals import estimate_all

__all__ = [
    "Box",
    "ConfigError",
    "Dataset",
    "EstimationError",
    "FitConfig",
    "QuantileLevel",
    "multi_index_set",
    "Component",
    "ErrorLaw",
    "Link",
    "TrueModel",
    "identify_normalize",
    "simulate",
    "fit_link",
    "predict_quantile",
    "estimate_all",
]
