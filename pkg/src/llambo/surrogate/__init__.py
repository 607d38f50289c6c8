"""Numeric surrogates sharing a Gaussian predictive contract."""

from .base import STD_FLOOR, PredictiveDistribution, nlpd
from .forest import ForestModel, forest_fit, forest_predict
from .gp import GpFitError, GpModel, gp_fit, gp_predict, log_marginal_likelihood
from .tpe import Kde, TpeModel, fit_kde, tpe_fit, tpe_score

__all__ = [
    "STD_FLOOR", "PredictiveDistribution", "nlpd",
    "ForestModel", "forest_fit", "forest_predict",
    "GpFitError", "GpModel", "gp_fit", "gp_predict", "log_marginal_likelihood",
    "Kde", "TpeModel", "fit_kde", "tpe_fit", "tpe_score",
]
