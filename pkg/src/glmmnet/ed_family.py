"""Exponential dispersion families in mean/dispersion parameterisation.

Every family is described by its mean ``mu`` and a dispersion ``phi`` with
``Var(Y) = phi * V(mu)``:

* Gaussian: variance ``phi``.
* Gamma: shape ``1/phi``, scale ``phi * mu``.
* Poisson: ``phi`` must equal 1.
* Bernoulli: ``phi`` is ignored.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import DomainError, ParameterError

_LOG_2PI = np.log(2.0 * np.pi)
_EPS_PROB = 1e-15


# ---------------------------------------------------------------------------
# Links
# ---------------------------------------------------------------------------

class Link:
    """Monotone link ``g`` mapping the mean onto the predictor scale."""

    name = "link"

    def link(self, mu):
        raise NotImplementedError

    def inverse(self, eta):
        raise NotImplementedError

    def inverse_derivative(self, eta):
        """``d mu / d eta`` evaluated at ``eta``."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return isinstance(other, Link) and other.name == self.name

    def __hash__(self):
        return hash(self.name)


class IdentityLink(Link):
    name = "identity"

    def link(self, mu):
        return np.asarray(mu, dtype=np.float64) * 1.0

    def inverse(self, eta):
        return np.asarray(eta, dtype=np.float64) * 1.0

    def inverse_derivative(self, eta):
        return np.ones_like(np.asarray(eta, dtype=np.float64))


class LogLink(Link):
    name = "log"

    def link(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        if np.any(mu <= 0):
            raise DomainError("log link requires mu > 0")
        return np.log(mu)

    def inverse(self, eta):
        return np.exp(np.asarray(eta, dtype=np.float64))

    def inverse_derivative(self, eta):
        return np.exp(np.asarray(eta, dtype=np.float64))


class LogitLink(Link):
    name = "logit"

    def link(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        if np.any((mu <= 0) | (mu >= 1)):
            raise DomainError("logit link requires 0 < mu < 1")
        return special.logit(mu)

    def inverse(self, eta):
        return special.expit(np.asarray(eta, dtype=np.float64))

    def inverse_derivative(self, eta):
        p = special.expit(np.asarray(eta, dtype=np.float64))
        return p * (1.0 - p)


class InverseLink(Link):
    """Reciprocal link, canonical for the gamma family."""

    name = "inverse"

    def link(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        if np.any(mu == 0):
            raise DomainError("inverse link requires mu != 0")
        return 1.0 / mu

    def inverse(self, eta):
        eta = np.asarray(eta, dtype=np.float64)
        if np.any(eta == 0):
            raise DomainError("inverse link requires eta != 0")
        return 1.0 / eta

    def inverse_derivative(self, eta):
        eta = np.asarray(eta, dtype=np.float64)
        return -1.0 / (eta * eta)


LINKS = {cls.name: cls() for cls in (IdentityLink, LogLink, LogitLink, InverseLink)}
"""Aliases used by configuration files; the simulation tables call ``exp`` an inverse link."""
_LINK_ALIASES = {"exp": "log", "exponential": "log", "logistic": "logit", "reciprocal": "inverse"}


def get_link(link):
    if isinstance(link, Link):
        return link
    key = str(link).strip().lower()
    key = _LINK_ALIASES.get(key, key)
    try:
        return LINKS[key]
    except KeyError:
        raise ParameterError(f"unknown link {link!r}") from None


def apply_link(link, value):
    return get_link(link).link(value)


def apply_inverse_link(link, value):
    return get_link(link).inverse(value)


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

class EDFamily:
    """Base class; subclasses implement the vectorised primitives."""

    name = "family"
    default_link = "identity"
    canonical_link = "identity"
    discrete = False
    fixed_dispersion = False

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return isinstance(other, EDFamily) and other.name == self.name

    def __hash__(self):
        return hash(self.name)

    # --- domain checks -----------------------------------------------------
    def in_support(self, y):
        raise NotImplementedError

    def in_mean_domain(self, mu):
        raise NotImplementedError

    def check_support(self, y):
        y = np.asarray(y, dtype=np.float64)
        if not np.all(np.isfinite(y)) or not np.all(self.in_support(y)):
            raise DomainError(f"response outside the {self.name} support")
        return y

    def check_mean(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        if not np.all(self.in_mean_domain(mu)):
            raise DomainError(f"mean outside the {self.name} mean domain")
        return mu

    def check_dispersion(self, phi):
        phi = np.asarray(phi, dtype=np.float64)
        if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
            raise ParameterError("dispersion must be positive and finite")
        return phi

    # --- primitives (vectorised, no validation) ----------------------------
    def variance(self, mu):
        raise NotImplementedError

    def logpdf(self, y, mu, phi):
        raise NotImplementedError

    def cdf(self, y, mu, phi):
        raise NotImplementedError

    def unit_deviance(self, y, mu):
        raise NotImplementedError

    def dlogpdf_dphi(self, y, mu, phi):
        return np.zeros(np.broadcast(y, mu).shape)

    def dlogpdf_dmu(self, y, mu, phi):
        return (y - mu) / (phi * self.variance(mu))

    def rvs(self, mu, phi, rng, size=None):
        raise NotImplementedError

    def crps_array(self, y, mu, phi):
        """Vectorised CRPS of ``ED(mu, phi)`` at ``y``."""
        raise NotImplementedError

    def crps_quad(self, y, mu, phi):
        """Scalar CRPS by direct integration (or exact summation)."""
        raise NotImplementedError

    def clip_mean(self, mu):
        return mu


class Gaussian(EDFamily):
    name = "gaussian"

    def in_support(self, y):
        return np.isfinite(y)

    def in_mean_domain(self, mu):
        return np.isfinite(mu)

    def variance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=np.float64))

    def logpdf(self, y, mu, phi):
        r = y - mu
        return -0.5 * (_LOG_2PI + np.log(phi)) - r * r / (2.0 * phi)

    def cdf(self, y, mu, phi):
        return special.ndtr((y - mu) / np.sqrt(phi))

    def unit_deviance(self, y, mu):
        return (y - mu) ** 2

    def dlogpdf_dphi(self, y, mu, phi):
        r = y - mu
        return (r * r / phi - 1.0) / (2.0 * phi)

    def rvs(self, mu, phi, rng, size=None):
        return rng.normal(mu, np.sqrt(phi), size=size)

    def crps_array(self, y, mu, phi):
        sigma = np.sqrt(phi)
        z = (y - mu) / sigma
        return sigma * (z * (2.0 * special.ndtr(z) - 1.0) + 2.0 * stats.norm.pdf(z) - 1.0 / np.sqrt(np.pi))

    def crps_quad(self, y, mu, phi):
        return float(self.crps_array(y, mu, phi))


class Gamma(EDFamily):
    name = "gamma"
    default_link = "log"
    canonical_link = "inverse"

    def in_support(self, y):
        return y > 0

    def in_mean_domain(self, mu):
        return (mu > 0) & np.isfinite(mu)

    def variance(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        return mu * mu

    def logpdf(self, y, mu, phi):
        k = 1.0 / phi
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (k - 1.0) * np.log(y) - k * y / mu + k * np.log(k) - k * np.log(mu) - special.gammaln(k)
        return out

    def cdf(self, y, mu, phi):
        k = 1.0 / phi
        return special.gammainc(k, np.maximum(y, 0.0) * k / mu)

    def unit_deviance(self, y, mu):
        return 2.0 * (-np.log(y / mu) + (y - mu) / mu)

    def dlogpdf_dphi(self, y, mu, phi):
        k = 1.0 / phi
        dk = np.log(y) - y / mu + np.log(k) + 1.0 - np.log(mu) - special.digamma(k)
        return -dk * k * k

    def rvs(self, mu, phi, rng, size=None):
        return rng.gamma(1.0 / phi, phi * np.asarray(mu), size=size)

    def crps_array(self, y, mu, phi):
        # closed form for shape a and scale mu/a
        a = 1.0 / phi
        scale = mu / a
        x = np.maximum(y, 0.0) / scale
        return (y * (2.0 * special.gammainc(a, x) - 1.0)
                - mu * (2.0 * special.gammainc(a + 1.0, x) - 1.0)
                - scale / special.beta(0.5, a))

    def crps_quad(self, y, mu, phi):
        k = 1.0 / phi
        dist = stats.gamma(k, scale=phi * mu)
        lo = 0.0
        hi = max(float(dist.isf(1e-14)), y)
        lower, _ = integrate.quad(lambda z: dist.cdf(z) ** 2, lo, max(y, 0.0),
                                  epsabs=1e-10, epsrel=1e-10, limit=200)
        upper, _ = integrate.quad(lambda z: dist.sf(z) ** 2, max(y, 0.0), hi,
                                  epsabs=1e-10, epsrel=1e-10, limit=200)
        if y < 0:
            lower = -y + 0.0
        return lower + upper


class Poisson(EDFamily):
    name = "poisson"
    default_link = "log"
    canonical_link = "log"
    discrete = True
    fixed_dispersion = True

    def in_support(self, y):
        return (y >= 0) & (np.floor(y) == y)

    def in_mean_domain(self, mu):
        return (mu > 0) & np.isfinite(mu)

    def check_dispersion(self, phi):
        phi = super().check_dispersion(phi)
        if np.any(np.abs(phi - 1.0) > 1e-12):
            raise ParameterError("Poisson requires phi = 1 (overdispersion is not supported)")
        return phi

    def variance(self, mu):
        return np.asarray(mu, dtype=np.float64) * 1.0

    def logpdf(self, y, mu, phi):
        return stats.poisson.logpmf(y, mu)

    def cdf(self, y, mu, phi):
        return stats.poisson.cdf(np.floor(y), mu)

    def unit_deviance(self, y, mu):
        return 2.0 * (special.xlogy(y, y / mu) - (y - mu))

    def rvs(self, mu, phi, rng, size=None):
        return rng.poisson(mu, size=size).astype(np.float64)

    def crps_array(self, y, mu, phi):
        y, mu = np.broadcast_arrays(np.asarray(y, dtype=np.float64), np.asarray(mu, dtype=np.float64))
        top = int(max(np.max(y), np.max(stats.poisson.isf(1e-16, mu)))) + 2
        k = np.arange(top + 1)
        cdf = stats.poisson.cdf(k[None, :], mu.reshape(-1, 1))
        step = (k[None, :] >= y.reshape(-1, 1)).astype(np.float64)
        return np.sum((cdf - step) ** 2, axis=1).reshape(y.shape)

    def crps_quad(self, y, mu, phi):
        return float(self.crps_array(np.array([y]), np.array([mu]), 1.0)[0])


class Bernoulli(EDFamily):
    name = "bernoulli"
    default_link = "logit"
    canonical_link = "logit"
    discrete = True
    fixed_dispersion = True

    def in_support(self, y):
        return (y == 0) | (y == 1)

    def in_mean_domain(self, mu):
        return (mu > 0) & (mu < 1)

    def check_dispersion(self, phi):
        return np.ones_like(np.asarray(phi, dtype=np.float64))

    def clip_mean(self, mu):
        return np.clip(mu, _EPS_PROB, 1.0 - _EPS_PROB)

    def variance(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        return mu * (1.0 - mu)

    def logpdf(self, y, mu, phi):
        mu = self.clip_mean(mu)
        return special.xlogy(y, mu) + special.xlog1py(1.0 - y, -mu)

    def cdf(self, y, mu, phi):
        return np.where(y < 0, 0.0, np.where(y < 1, 1.0 - mu, 1.0))

    def unit_deviance(self, y, mu):
        return -2.0 * self.logpdf(y, mu, 1.0)

    def dlogpdf_dmu(self, y, mu, phi):
        mu = self.clip_mean(mu)
        return (y - mu) / (mu * (1.0 - mu))

    def rvs(self, mu, phi, rng, size=None):
        return (rng.random(size=np.shape(mu) if size is None else size) < mu).astype(np.float64)

    def crps_array(self, y, mu, phi):
        return (np.asarray(y, dtype=np.float64) - mu) ** 2

    def crps_quad(self, y, mu, phi):
        return float((y - mu) ** 2)


FAMILIES = {cls.name: cls() for cls in (Gaussian, Gamma, Poisson, Bernoulli)}
_FAMILY_ALIASES = {"normal": "gaussian", "binomial": "bernoulli"}


def get_family(family):
    if isinstance(family, EDFamily):
        return family
    key = str(family).strip().lower()
    key = _FAMILY_ALIASES.get(key, key)
    try:
        return FAMILIES[key]
    except KeyError:
        raise ParameterError(f"unknown family {family!r}") from None


def variance_function(family, mu):
    family = get_family(family)
    mu = np.asarray(mu, dtype=np.float64)
    if not np.all(family.in_mean_domain(mu)):
        raise DomainError(f"mean outside the {family.name} mean domain")
    return family.variance(mu)


# ---------------------------------------------------------------------------
# Single predictive distribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictiveDistribution:
    """``ED(mean, dispersion)`` for one observation."""

    family: EDFamily
    mean: float
    dispersion: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", get_family(self.family))
        self.family.check_mean(self.mean)
        phi = float(self.family.check_dispersion(self.dispersion))
        object.__setattr__(self, "dispersion", phi)
        object.__setattr__(self, "mean", float(self.mean))

    @property
    def variance(self):
        return self.dispersion * float(self.family.variance(self.mean))

    def log_density(self, y):
        return log_density(y, self)

    def cdf(self, y):
        return float(self.family.cdf(y, self.mean, self.dispersion))

    def crps(self, y):
        return crps(self, y)

    def sample(self, rng, size=None):
        return self.family.rvs(self.mean, self.dispersion, rng, size=size)


def log_density(y, dist):
    """``log p(y | mu, phi)`` for a :class:`PredictiveDistribution`."""
    y = dist.family.check_support(y)
    return float(dist.family.logpdf(y, dist.mean, dist.dispersion))


def sample(dist, rng, size=None):
    return dist.sample(rng, size=size)


def crps(dist, y):
    """Continuous ranked probability score of ``dist`` at the observation ``y``.

    Gaussian uses the closed form; the other families integrate (or sum) the
    squared difference between the cdf and the observation step function.
    """
    if not np.isfinite(y):
        raise DomainError("CRPS requires a finite observation")
    return float(dist.family.crps_quad(float(y), dist.mean, dist.dispersion))


def crps_by_quadrature(dist, y, tail=1e-12):
    """Reference CRPS computed by brute-force integration of the definition.

    Used as an independent oracle for the closed forms.
    """
    fam = dist.family
    if fam.discrete:
        return fam.crps_quad(y, dist.mean, dist.dispersion)
    if isinstance(fam, Gaussian):
        sd = np.sqrt(dist.dispersion)
        lo = min(dist.mean - 40 * sd, y)
        hi = max(dist.mean + 40 * sd, y)
    else:
        frozen = stats.gamma(1.0 / dist.dispersion, scale=dist.dispersion * dist.mean)
        lo, hi = 0.0, max(float(frozen.isf(tail)), y)

    def f_lower(z):
        return float(fam.cdf(z, dist.mean, dist.dispersion)) ** 2

    def f_upper(z):
        return (1.0 - float(fam.cdf(z, dist.mean, dist.dispersion))) ** 2

    a, _ = integrate.quad(f_lower, lo, y, epsabs=1e-12, epsrel=1e-12, limit=500)
    b, _ = integrate.quad(f_upper, y, hi, epsabs=1e-12, epsrel=1e-12, limit=500)
    return a + b


def ml_dispersion_gamma(y, mu):
    """Maximum-likelihood gamma dispersion for fixed means."""
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    stat = np.mean(np.log(y / mu) - y / mu) + 1.0  # <= 0 by Jensen

    def score(log_k):
        k = np.exp(log_k)
        return np.log(k) - special.digamma(k) + stat

    if stat >= -1e-300:
        return 1e-8
    lo, hi = -20.0, 30.0
    if score(hi) > 0:
        return float(np.exp(-hi))
    return float(1.0 / np.exp(optimize.brentq(score, lo, hi, xtol=1e-14)))
