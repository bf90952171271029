"""Gaussian random-effects layer: fixed prior, mean-field variational posterior."""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ParameterError, ShapeError

Z95 = 1.96


def softplus(x):
    """``log(1 + exp(x))`` computed without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 0.0))))


def softplus_inverse(y):
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ParameterError("softplus inverse needs positive input")
    big = y > 30
    out = np.empty_like(y)
    out[big] = y[big] + np.log(-np.expm1(-y[big]))
    out[~big] = np.log(np.expm1(y[~big]))
    return out


@dataclass(frozen=True)
class REPrior:
    """``u_j ~ N(0, scale**2)`` i.i.d.; the scale is not trained."""

    scale: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ParameterError("prior scale must be positive")


@dataclass
class REPosterior:
    """Diagonal Gaussian ``q(u) = N(loc, diag(sigma**2))``.

    ``sigma = multiplier * softplus(raw_scale)``; a small multiplier keeps the
    posterior scales small early in training.
    """

    loc: np.ndarray
    raw_scale: np.ndarray
    multiplier: float = 0.01

    def __post_init__(self):
        self.loc = np.asarray(self.loc, dtype=np.float64)
        self.raw_scale = np.asarray(self.raw_scale, dtype=np.float64)
        if self.loc.ndim != 1 or self.loc.shape != self.raw_scale.shape:
            raise ShapeError("loc and raw_scale must be vectors of the same length")
        if not self.multiplier > 0:
            raise ParameterError("scale multiplier must be positive")

    @classmethod
    def initial(cls, n_categories, multiplier=0.01):
        return cls(np.zeros(n_categories), np.zeros(n_categories), multiplier)

    @property
    def n_categories(self):
        return self.loc.size

    @property
    def scales(self):
        return effective_scales(self)


def effective_scales(post):
    return post.multiplier * softplus(post.raw_scale)


def kl_to_prior(post, prior, grad=False):
    """Closed-form ``KL[q || prior]`` summed over categories.

    With ``grad=True`` also returns ``(dKL/dloc, dKL/draw_scale)``.
    """
    s = effective_scales(post)
    s2u = prior.scale ** 2
    kl = np.sum(np.log(prior.scale / s) + (s * s + post.loc ** 2) / (2.0 * s2u) - 0.5)
    if not grad:
        return float(kl)
    d_loc = post.loc / s2u
    d_s = -1.0 / s + s / s2u
    d_raw = d_s * post.multiplier * special.expit(post.raw_scale)
    return float(kl), d_loc, d_raw


def sample_reparameterized(post, eps):
    """``u = loc + sigma * eps``; ``eps`` has trailing length ``q``."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape[-1] != post.n_categories:
        raise ShapeError(f"expected {post.n_categories} standard-normal draws, got {eps.shape[-1]}")
    return post.loc + effective_scales(post) * eps


@dataclass
class PosteriorSummary:
    category: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    z: np.ndarray = field(init=False)
    lo95: np.ndarray = field(init=False)
    hi95: np.ndarray = field(init=False)

    def __post_init__(self):
        self.z = self.mean / self.sd
        self.lo95 = self.mean - Z95 * self.sd
        self.hi95 = self.mean + Z95 * self.sd

    def sorted_by_z(self):
        """Rows reordered by decreasing z-score."""
        order = np.argsort(-self.z, kind="stable")
        return PosteriorSummary(self.category[order], self.mean[order], self.sd[order])

    def excludes_zero(self):
        return (self.lo95 > 0) | (self.hi95 < 0)

    def rows(self):
        for row in zip(self.category, self.mean, self.sd, self.z, self.lo95, self.hi95):
            yield (int(row[0]),) + tuple(float(v) for v in row[1:])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["category_id", "mean", "sd", "z", "lo95", "hi95"])
            for row in self.rows():
                writer.writerow([row[0], *(repr(v) for v in row[1:])])


def posterior_summary(post):
    return PosteriorSummary(np.arange(post.n_categories), post.loc.copy(), effective_scales(post))
