"""Comparison models: GLMs, random-intercept fits, the GLMM encoder, the linear GLMM and NN_ee."""

from .dispersion import DegenerateDispersionWarning, estimate_dispersion
from .encoding import EncoderModel, glmm_encode, make_folds, write_encoded_csv
from .glm import DESIGNS, GLMModel, balance_gaps, design_matrix, fit_glm_irls, glm_nll, glm_score, irls
from .glmm import fit_glmm_baseline, glmm_coefficients
from .nn_ee import EntityEmbeddedNet, default_embedding_dim, fit_nn_ee
from .random_intercept import RandomInterceptFit, blup, fit_random_intercept, reml_variance_components

__all__ = [
    "DESIGNS", "DegenerateDispersionWarning", "EncoderModel", "EntityEmbeddedNet", "GLMModel",
    "RandomInterceptFit", "balance_gaps", "blup", "default_embedding_dim", "design_matrix",
    "estimate_dispersion", "fit_glm_irls", "fit_glmm_baseline", "fit_nn_ee", "fit_random_intercept",
    "glm_nll", "glm_score", "glmm_coefficients", "glmm_encode", "irls", "make_folds",
    "reml_variance_components", "write_encoded_csv",
]
