import numpy as np
import pytest

from glmmnet.baselines import DegenerateDispersionWarning, estimate_dispersion
from glmmnet.errors import ShapeError


def test_gaussian_mse():
    assert estimate_dispersion([0.0, 0.0], [1.0, -1.0], "gaussian") == 1.0


def test_perfect_forecasts_are_floored():
    with pytest.warns(DegenerateDispersionWarning):
        assert estimate_dispersion([1.0, 2.0], [1.0, 2.0], "gaussian") == 1e-8


def test_gamma_consistency():
    rng = np.random.default_rng(5)
    mu = np.exp(rng.normal(0, 0.5, 100_000))
    y = rng.gamma(25.0, mu / 25.0)
    assert abs(estimate_dispersion(mu, y, "gamma") - 0.04) < 0.002


def test_fixed_dispersion_families():
    assert estimate_dispersion([1.0, 2.0], [0.0, 5.0], "poisson") == 1.0
    assert estimate_dispersion([0.3], [1.0], "bernoulli") == 1.0


def test_errors():
    with pytest.raises(ShapeError):
        estimate_dispersion([], [], "gaussian")
    with pytest.raises(ShapeError):
        estimate_dispersion([1.0], [1.0, 2.0], "gaussian")
