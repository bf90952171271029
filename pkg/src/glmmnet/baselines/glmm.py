"""Linear GLMM baseline: ``g(mu) = beta0 + x'beta + u_j`` trained variationally.

This is a :class:`~glmmnet.model.GLMMNet` whose fixed-effects network is a
single affine map, so it is fitted by exactly the same ELBO machinery.
"""

import numpy as np

from ..model import GLMMNet, TrainingConfig


def fit_glmm_baseline(dataset, family="gaussian", link=None, config=None, rng=None, validation=None):
    """Fit the linear GLMM; ``validation`` is passed to :meth:`GLMMNet.fit`."""
    cfg = (config or TrainingConfig()).replace(hidden=())
    rng = np.random.default_rng() if rng is None else rng
    model = GLMMNet(dataset.n_features, dataset.n_categories, family, link, cfg, rng)
    model.fit(dataset, rng, validation)
    return model


def glmm_coefficients(model):
    """``(beta0, beta)`` of a zero-hidden-layer model on the original feature scale."""
    if model.net.hidden:
        raise ValueError("coefficients are only defined for a network without hidden layers")
    layer = model.net.layers[0]
    w = layer.weights[0] / model.standardizer.scale
    b = float(layer.biases[0] - np.sum(w * model.standardizer.mean))
    return b, w
