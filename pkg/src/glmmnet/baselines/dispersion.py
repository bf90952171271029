"""Dispersion estimates that turn point forecasts into predictive distributions."""

import warnings

import numpy as np

from ..ed_family import get_family, ml_dispersion_gamma
from ..errors import ShapeError

DISPERSION_FLOOR = 1e-8


class DegenerateDispersionWarning(RuntimeWarning):
    """The estimated dispersion hit the floor (forecasts reproduce the data)."""


def estimate_dispersion(point_forecasts, y, family):
    """Maximum-likelihood ``phi`` with the means held at ``point_forecasts``.

    Gaussian: mean squared residual.  Gamma: one-dimensional likelihood
    maximisation over the shape.  Poisson and Bernoulli: 1.  Estimates
    below ``1e-8`` are floored there and a warning is issued.
    """
    family = get_family(family)
    mu = np.asarray(point_forecasts, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if mu.size == 0:
        raise ShapeError("cannot estimate a dispersion from no observations")
    if mu.shape != y.shape:
        raise ShapeError("forecasts and observations differ in length")
    if family.fixed_dispersion:
        return 1.0
    family.check_mean(mu)
    if family.name == "gaussian":
        phi = float(np.mean((y - mu) ** 2))
    elif family.name == "gamma":
        family.check_support(y)
        phi = ml_dispersion_gamma(y, mu)
    else:  # pragma: no cover - all shipped families handled above
        raise ShapeError(f"no dispersion estimator for {family.name}")
    if phi < DISPERSION_FLOOR:
        warnings.warn("dispersion estimate is degenerate; flooring at 1e-8", DegenerateDispersionWarning,
                      stacklevel=2)
        phi = DISPERSION_FLOOR
    return phi
