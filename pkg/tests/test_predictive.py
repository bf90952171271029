import math

import numpy as np
import pytest
from scipy import integrate, stats

from glmmnet.ed_family import PredictiveDistribution, crps, get_family
from glmmnet.errors import DomainError, ShapeError
from glmmnet.predictive import MixturePrediction, PointPrediction, mixture_crps_gaussian


def _abs_normal_mean(m, sd):
    """``E|N(m, sd^2)|``."""
    z = m / sd
    return m * (2 * stats.norm.cdf(z) - 1) + 2 * sd * stats.norm.pdf(z)


def gaussian_mixture_crps_exact(centers, phi, y):
    s = math.sqrt(phi)
    e_xy = np.mean(_abs_normal_mean(centers - y, s))
    diff = centers[:, None] - centers[None, :]
    e_xx = np.mean(_abs_normal_mean(diff, math.sqrt(2) * s))
    return e_xy - 0.5 * e_xx


def brute_crps(cdf, y, lo, hi):
    below = integrate.quad(lambda x: cdf(x) ** 2, lo, y, limit=400, epsabs=1e-12, epsrel=1e-11)[0] if y > lo else 0.0
    above = integrate.quad(lambda x: (1 - cdf(x)) ** 2, max(y, lo), hi, limit=400, epsabs=1e-12,
                           epsrel=1e-11)[0]
    return below + above + (lo - y if y < lo else 0.0)


class TestGaussianMixture:
    @pytest.mark.parametrize("phi", [0.01, 0.25, 4.0])
    def test_matches_exact_mixture_crps(self, rng, phi):
        centers = rng.normal(0.0, 0.7, 40)
        ys = np.array([-3.0, -0.4, 0.0, 0.3, 2.5])
        got = mixture_crps_gaussian(centers, phi, ys)
        ref = [gaussian_mixture_crps_exact(centers, phi, y) for y in ys]
        np.testing.assert_allclose(got, ref, rtol=1e-5)

    def test_far_tails(self, rng):
        centers = rng.normal(size=10)
        ys = np.array([-60.0, 80.0])
        ref = [gaussian_mixture_crps_exact(centers, 1.0, y) for y in ys]
        np.testing.assert_allclose(mixture_crps_gaussian(centers, 1.0, ys), ref, rtol=1e-6)

    def test_single_draw_is_closed_form(self):
        got = mixture_crps_gaussian(np.array([0.3]), 0.5, np.array([1.1]))[0]
        assert got == pytest.approx(crps(PredictiveDistribution(get_family("gaussian"), 0.3, 0.5), 1.1), abs=1e-8)

    def test_row_shift_equivariance(self, rng):
        offs = rng.normal(0, 0.5, (1, 200))
        y = np.array([0.7, 5.7])
        pred = MixturePrediction("gaussian", "identity", 0.3, np.array([0.0, 5.0]), np.zeros(2, int), offs)
        c = pred.crps(y)
        assert c[0] == pytest.approx(c[1], rel=1e-10)


class TestGammaMixture:
    @pytest.mark.parametrize("phi", [0.04, 0.5])
    def test_matches_quadrature(self, rng, phi):
        offs = rng.normal(0.0, 0.3, (1, 30))
        f = np.array([0.4, 0.4, 0.4])
        ys = np.array([0.2, 1.5, 4.0])
        pred = MixturePrediction("gamma", "log", phi, f, np.zeros(3, int), offs)
        mus = np.exp(f[0] + offs[0])
        k = 1.0 / phi

        def cdf(x):
            return np.mean(stats.gamma.cdf(x, k, scale=mus / k))

        ref = [brute_crps(cdf, y, 0.0, 60.0) for y in ys]
        np.testing.assert_allclose(pred.crps(ys), ref, rtol=1e-5)

    def test_non_positive_observation(self, rng):
        offs = rng.normal(0.0, 0.3, (1, 20))
        pred = MixturePrediction("gamma", "log", 0.2, np.zeros(2), np.zeros(2, int), offs)
        c0, cneg = pred.crps(np.array([0.0, -1.5]))
        assert cneg == pytest.approx(c0 + 1.5, rel=1e-9)

    def test_generic_row_path_agrees(self, rng):
        # the inverse link forces the per-row path through component means
        offs = np.abs(rng.normal(0.0, 0.1, (1, 25)))
        f = np.array([1.0])
        row = MixturePrediction("gamma", "inverse", 0.3, f, np.zeros(1, int), offs)
        mus = 1.0 / (f[0] + offs[0])

        def cdf(x):
            return np.mean(stats.gamma.cdf(x, 1 / 0.3, scale=mus * 0.3))

        assert row.crps(np.array([0.8]))[0] == pytest.approx(brute_crps(cdf, 0.8, 0.0, 40.0), rel=1e-5)


class TestDiscreteMixtures:
    def test_poisson_matches_summation(self, rng):
        offs = rng.normal(0.0, 0.4, (1, 15))
        pred = MixturePrediction("poisson", "log", 1.0, np.array([1.0]), np.zeros(1, int), offs)
        mus = np.exp(1.0 + offs[0])
        k = np.arange(200)
        F = stats.poisson.cdf(k[:, None], mus[None, :]).mean(axis=1)
        ref = np.sum((F - (k >= 3)) ** 2)
        assert pred.crps(np.array([3.0]))[0] == pytest.approx(ref, rel=1e-10)

    def test_bernoulli_is_brier(self, rng):
        offs = rng.normal(0.0, 1.0, (1, 50))
        pred = MixturePrediction("bernoulli", "logit", 1.0, np.array([0.2, 0.2]), np.zeros(2, int), offs)
        p = np.mean(1 / (1 + np.exp(-(0.2 + offs[0]))))
        np.testing.assert_allclose(pred.crps(np.array([1.0, 0.0])), [(1 - p) ** 2, p ** 2], rtol=1e-12)


class TestMixtureBookkeeping:
    def test_unseen_rows_use_single_component(self, rng):
        offs = rng.normal(size=(1, 100))
        pred = MixturePrediction("gaussian", "identity", 0.5, np.array([0.0, 1.0]), np.array([0, -1]), offs)
        assert len(pred.components(1)) == 1
        assert pred.crps(np.array([0.0, 2.0]))[1] == pytest.approx(crps(PredictiveDistribution(get_family("gaussian"), 1.0, 0.5), 2.0))
        assert pred.mean()[1] == 1.0

    def test_log_density_of_identical_draws(self):
        offs = np.zeros((1, 7))
        pred = MixturePrediction("gaussian", "identity", 1.0, np.array([0.0]), np.zeros(1, int), offs)
        assert pred.log_density(np.array([0.0]))[0] == pytest.approx(-0.5 * math.log(2 * math.pi))

    def test_shape_and_domain_errors(self):
        with pytest.raises(ShapeError):
            MixturePrediction("gaussian", "identity", 1.0, np.zeros(2), np.zeros(3, int), np.zeros((1, 2)))
        pred = MixturePrediction("gaussian", "identity", 1.0, np.zeros(1), np.zeros(1, int), np.zeros((1, 2)))
        with pytest.raises(DomainError):
            pred.crps(np.array([np.nan]))


class TestPointPrediction:
    def test_gaussian_scores(self):
        pred = PointPrediction("gaussian", np.zeros(4), 1.0)
        np.testing.assert_allclose(pred.crps(np.zeros(4)), 0.23370, atol=1e-5)
        np.testing.assert_allclose(-pred.log_density(np.zeros(4)), 0.91894, atol=1e-5)
        assert len(pred) == 4

    def test_cdf_and_component(self):
        pred = PointPrediction("gamma", np.array([2.0]), 0.5)
        assert pred.cdf(np.array([2.0]))[0] == pytest.approx(stats.gamma.cdf(2.0, 2.0, scale=1.0))
        assert pred.component(0).mean == 2.0

    def test_invalid_mean(self):
        with pytest.raises(DomainError):
            PointPrediction("gamma", np.array([-1.0]), 0.5)
