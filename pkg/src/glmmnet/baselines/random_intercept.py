"""Random-intercept model ``g(mu_i) = beta0 + u_{j[i]}``, ``u_j ~ N(0, sigma_u^2)``.

For a Gaussian response with identity link the variance components are
estimated by restricted maximum likelihood and the intercepts are the
BLUPs.  Writing ``tau = sigma_u^2 / sigma_eps^2`` and profiling ``beta0``
and ``sigma_eps^2`` out, the REML criterion depends on ``tau`` alone
through per-category sufficient statistics ``n_j``, ``S_j = sum y`` and
``SS_j = sum y^2``:

    -2 l_R(tau) = (n-1) log(Q/(n-1)) + sum_j log(1 + n_j tau)
                  + log(sum_j n_j / (1 + n_j tau)) + const

    Q = sum_j [SS_j - 2 b S_j + n_j b^2 - tau (S_j - n_j b)^2 / (1 + n_j tau)]

with ``b`` the GLS intercept.  The criterion is scanned on a grid in
``log tau`` and refined by bounded golden-section search.

Other families or links are fitted variationally by a GLMMNet without
hidden layers or standard features.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ..data import Dataset
from ..ed_family import Gaussian, get_family, get_link
from ..errors import ParameterError, ShapeError

LOG_TAU_BOUNDS = (-15.0, 15.0)


@dataclass
class RandomInterceptFit:
    beta0: float
    u: np.ndarray
    sigma_u: float
    dispersion: float
    family: object
    link: object
    counts: np.ndarray
    method: str

    @property
    def n_categories(self):
        return self.u.size

    def seen(self, category):
        category = np.asarray(category, dtype=np.int64)
        ok = (category >= 0) & (category < self.u.size)
        out = np.zeros(category.shape, dtype=bool)
        out[ok] = self.counts[category[ok]] > 0
        return out

    def fallback(self):
        """``g^{-1}(beta0)``, the prediction for a category without data."""
        return float(self.link.inverse(np.array([self.beta0]))[0])

    def predict(self, category):
        """``g^{-1}(beta0 + u_j)`` for categories with training data, else the fallback."""
        category = np.asarray(category, dtype=np.int64)
        seen = self.seen(category)
        eta = np.full(category.shape, self.beta0, dtype=np.float64)
        eta[seen] += self.u[category[seen]]
        return self.link.inverse(eta)


def _sufficient(y, category, q):
    n_j = np.bincount(category, minlength=q).astype(np.float64)
    s_j = np.bincount(category, weights=y, minlength=q)
    ss_j = np.bincount(category, weights=y * y, minlength=q)
    keep = n_j > 0
    return n_j[keep], s_j[keep], ss_j[keep]


def _gls_intercept(n_j, s_j, tau):
    d = 1.0 + n_j * tau
    return float(np.sum(s_j / d) / np.sum(n_j / d))


def _quadratic(n_j, s_j, ss_j, tau, b):
    d = 1.0 + n_j * tau
    return float(np.sum(ss_j - 2.0 * b * s_j + n_j * b * b - tau * (s_j - n_j * b) ** 2 / d))


def reml_criterion(log_tau, n_j, s_j, ss_j):
    """``-2 l_R`` (up to a constant) as a function of ``log tau``."""
    tau = math.exp(log_tau)
    n = float(n_j.sum())
    b = _gls_intercept(n_j, s_j, tau)
    Q = max(_quadratic(n_j, s_j, ss_j, tau, b), 1e-300)
    d = 1.0 + n_j * tau
    return (n - 1.0) * math.log(Q / (n - 1.0)) + float(np.sum(np.log(d))) + math.log(float(np.sum(n_j / d)))


def reml_variance_components(y, category, q, grid_size=121):
    """REML ``(beta0, sigma_u^2, sigma_eps^2)`` for the Gaussian random intercept."""
    y = np.asarray(y, dtype=np.float64)
    n_j, s_j, ss_j = _sufficient(y, np.asarray(category, dtype=np.int64), q)
    n = n_j.sum()
    if n < 2:
        raise ParameterError("REML needs at least two observations")
    grid = np.linspace(*LOG_TAU_BOUNDS, grid_size)
    values = np.array([reml_criterion(t, n_j, s_j, ss_j) for t in grid])
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(reml_criterion, bounds=(lo, hi), args=(n_j, s_j, ss_j), method="bounded",
                                   options={"xatol": 1e-10})
    log_tau = float(res.x) if res.fun <= values[i] else float(grid[i])
    tau = math.exp(log_tau)
    b = _gls_intercept(n_j, s_j, tau)
    sigma_eps2 = _quadratic(n_j, s_j, ss_j, tau, b) / (n - 1.0)
    return b, tau * sigma_eps2, sigma_eps2


def blup(y, category, q, beta0, sigma_u, sigma_eps):
    """Best linear unbiased predictions ``n_j s_u^2/(n_j s_u^2 + s_e^2) (ybar_j - beta0)``.

    ``sigma_u = inf`` gives the raw category deviations and ``sigma_u = 0``
    gives zeros.  Categories without rows get 0.
    """
    category = np.asarray(category, dtype=np.int64)
    y = np.asarray(y, dtype=np.float64)
    n_j = np.bincount(category, minlength=q).astype(np.float64)
    s_j = np.bincount(category, weights=y, minlength=q)
    u = np.zeros(q)
    seen = n_j > 0
    ybar = s_j[seen] / n_j[seen]
    if math.isinf(sigma_u):
        shrink = np.ones(seen.sum())
    else:
        su2 = sigma_u ** 2
        shrink = n_j[seen] * su2 / (n_j[seen] * su2 + sigma_eps ** 2)
    u[seen] = shrink * (ybar - beta0)
    return u


def fit_random_intercept(y, category, n_categories, family="gaussian", link=None, config=None, rng=None):
    """Fit the random-intercept model; returns a :class:`RandomInterceptFit`.

    Gaussian/identity: REML plus BLUP.  Otherwise a variational fit with
    ``config`` (a :class:`~glmmnet.model.TrainingConfig`, hidden layers are
    forced to none).  Its ``sigma_u`` is ``sqrt(mean(mu_j^2 + s_j^2))``
    over the variational posterior.
    """
    family = get_family(family)
    link = get_link(family.default_link if link is None else link)
    y = family.check_support(y)
    category = np.asarray(category, dtype=np.int64).reshape(-1)
    q = int(n_categories)
    if q < 1:
        raise ParameterError("need at least one category")
    if category.shape != y.shape:
        raise ShapeError("category and y differ in length")
    if y.size < 2:
        raise ParameterError("a random-intercept fit needs at least two observations")
    if np.any((category < 0) | (category >= q)):
        raise IndexError("category index outside [0, q)")
    counts = np.bincount(category, minlength=q)
    if isinstance(family, Gaussian) and link.name == "identity":
        b, su2, se2 = reml_variance_components(y, category, q)
        su, se = math.sqrt(su2), math.sqrt(se2)
        u = blup(y, category, q, b, su, se)
        return RandomInterceptFit(b, u, su, se2, family, link, counts, "reml")
    from ..model import GLMMNet, TrainingConfig

    cfg = (config or TrainingConfig()).replace(hidden=())
    rng = np.random.default_rng() if rng is None else rng
    data = Dataset(np.zeros((y.size, 0)), category, y, q)
    model = GLMMNet(0, q, family, link, cfg, rng)
    model.fit(data, rng)
    beta0 = float(model.net.layers[-1].biases[0])
    return RandomInterceptFit(beta0, model.posterior_means, model.random_effect_scale(), model.dispersion,
                              family, link, counts, "variational")
