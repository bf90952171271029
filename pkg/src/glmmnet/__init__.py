"""Mixed-effects neural networks for high-cardinality categorical features.

A feed-forward network models the fixed effects.  A variational Gaussian
random-effects layer models the categorical feature.  The response follows
an exponential-dispersion family.  The package also ships the comparison
models, a simulation protocol, forecast metrics and a benchmark driver.
"""

from ._kernels import BACKEND
from .data import Dataset, Standardizer, read_csv_dataset
from .ed_family import (FAMILIES, LINKS, PredictiveDistribution, apply_inverse_link, apply_link, crps,
                        get_family, get_link, log_density, sample, variance_function)
from .model import FitReport, GLMMNet, TrainingConfig, elbo_loss, fit_glmmnet, gaussian_marginal_nll_oracle
from .predictive import MixturePrediction, PointPrediction
from .variational import REPosterior, REPrior, effective_scales, kl_to_prior, posterior_summary

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Dataset", "FAMILIES", "FitReport", "GLMMNet", "LINKS", "MixturePrediction", "PointPrediction",
    "PredictiveDistribution", "REPosterior", "REPrior", "Standardizer", "TrainingConfig", "apply_inverse_link",
    "apply_link", "crps", "effective_scales", "elbo_loss", "fit_glmmnet", "gaussian_marginal_nll_oracle",
    "get_family", "get_link", "kl_to_prior", "log_density", "posterior_summary", "read_csv_dataset", "sample",
    "variance_function",
]
