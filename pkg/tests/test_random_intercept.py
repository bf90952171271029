import math
import warnings

import numpy as np
import pytest
import statsmodels.api as sm

from glmmnet.baselines import blup, fit_random_intercept, reml_variance_components
from glmmnet.errors import ParameterError, ShapeError
from glmmnet.model import TrainingConfig


def _grouped(rng, n=600, q=30, sigma_u=0.6, sigma_e=0.4, beta0=1.2, balanced=False):
    cat = np.arange(n) % q if balanced else rng.integers(0, q, n)
    u = rng.normal(0, sigma_u, q)
    return cat, beta0 + u[cat] + rng.normal(0, sigma_e, n), u


def test_reml_matches_statsmodels(rng):
    cat, y, _ = _grouped(rng)
    b, su2, se2 = reml_variance_components(y, cat, 30)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ref = sm.MixedLM(y, np.ones((y.size, 1)), groups=cat).fit(reml=True, method="lbfgs")
    assert b == pytest.approx(ref.fe_params[0], rel=1e-4)
    assert su2 == pytest.approx(float(np.asarray(ref.cov_re)[0, 0]), rel=1e-3)
    assert se2 == pytest.approx(ref.scale, rel=1e-4)


def test_blup_matches_gls(rng):
    cat, y, _ = _grouped(rng, n=40, q=5)
    su, se, b0 = 0.7, 0.5, 1.0
    Z = np.eye(5)[cat]
    V = su ** 2 * Z @ Z.T + se ** 2 * np.eye(40)
    ref = su ** 2 * Z.T @ np.linalg.solve(V, y - b0)
    np.testing.assert_allclose(blup(y, cat, 5, b0, su, se), ref, rtol=1e-10)


def test_blup_balanced_shrinkage_formula(rng):
    cat, y, _ = _grouped(rng, n=100, q=10, balanced=True)
    ybar = np.array([y[cat == j].mean() for j in range(10)])
    shrink = 10 * 0.36 / (10 * 0.36 + 0.16)
    np.testing.assert_allclose(blup(y, cat, 10, y.mean(), 0.6, 0.4), shrink * (ybar - y.mean()), rtol=1e-12)


def test_blup_limits(rng):
    cat, y, _ = _grouped(rng, n=50, q=4)
    ybar = np.array([y[cat == j].mean() for j in range(4)])
    np.testing.assert_allclose(blup(y, cat, 4, 1.0, math.inf, 0.3), ybar - 1.0, rtol=1e-12)
    np.testing.assert_array_equal(blup(y, cat, 4, 1.0, 0.0, 0.3), 0.0)
    np.testing.assert_allclose(blup(y, cat, 4, 1.0, 1e6, 0.3), ybar - 1.0, rtol=1e-9)


def test_empty_category_gets_zero_and_fallback(rng):
    cat, y, _ = _grouped(rng, n=200, q=10)
    cat[cat == 3] = 4
    fit = fit_random_intercept(y, cat, 10)
    assert fit.u[3] == 0.0
    assert fit.predict(np.array([3, -1]))[0] == fit.fallback() == fit.beta0
    assert not fit.seen(np.array([3, 12]))[0]


def test_recovers_components(rng):
    cat, y, u = _grouped(rng, n=5000, q=100)
    fit = fit_random_intercept(y, cat, 100)
    assert fit.method == "reml"
    assert fit.sigma_u == pytest.approx(0.6, rel=0.2)
    assert fit.dispersion == pytest.approx(0.16, rel=0.05)
    assert np.corrcoef(fit.u, u)[0, 1] > 0.95


def test_errors():
    with pytest.raises(ParameterError):
        fit_random_intercept([1.0], [0], 1)
    with pytest.raises(ShapeError):
        fit_random_intercept([1.0, 2.0], [0], 1)
    with pytest.raises(IndexError):
        fit_random_intercept([1.0, 2.0], [0, 2], 2)
    with pytest.raises(ParameterError):
        fit_random_intercept([1.0, 2.0], [0, 0], 0)


def test_non_gaussian_delegates_to_variational_fit(rng):
    n, q = 800, 8
    cat = rng.integers(0, q, n)
    u = rng.normal(0, 0.5, q)
    y = rng.poisson(np.exp(1.0 + u[cat])).astype(float)
    fit = fit_random_intercept(y, cat, q, "poisson", config=TrainingConfig(max_epochs=200), rng=rng)
    assert fit.method == "variational"
    assert np.corrcoef(fit.u, u)[0, 1] > 0.9
    assert fit.fallback() == pytest.approx(math.exp(fit.beta0))
