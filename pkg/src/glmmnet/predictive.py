"""Predictive distributions returned by the models.

:class:`PointPrediction` wraps one ``ED(mu_i, phi)`` per row (point-forecast
models).  :class:`MixturePrediction` holds the equal-weight Monte Carlo
mixture ``(1/N) sum_s ED(g^{-1}(f_i + u_s), phi)`` of a mixed model.

Mixture CRPS is integrated on the mixture cdf.  Rows that share a category
share the same random-effect draws, and for Gaussian/identity and gamma/log
the row mixture is a shift (resp. rescaling) of one per-category mixture, so
the cdf is tabulated once per category:

* Gaussian/identity: ``Y = f + V``, ``CRPS(F_Y, y) = CRPS(F_V, y - f)``.
* gamma/log: ``Y = e^f W``, ``CRPS(F_Y, y) = e^f CRPS(F_W, y e^{-f})``.

Other family/link pairs tabulate per row.  In both cases the draws are
linearly binned onto nodes spaced at 1/100 of the component kernel width
before tabulation (error far below the Monte Carlo error).
"""

import math

import numpy as np
from scipy import integrate, special, stats

from . import _kernels
from .ed_family import Bernoulli, Gamma, Gaussian, PredictiveDistribution, Poisson, get_family, get_link
from .errors import DomainError, ShapeError

_BIN_RESOLUTION = 100
_MAX_BINS = 4096
_GRID_PER_WIDTH = 25
_TAIL = 1e-13


class PointPrediction:
    """Independent ``ED(mean_i, phi)`` forecasts."""

    def __init__(self, family, mean, dispersion=1.0):
        self.family = get_family(family)
        self.mean_ = self.family.clip_mean(np.asarray(mean, dtype=np.float64))
        self.family.check_mean(self.mean_)
        self.dispersion = float(self.family.check_dispersion(dispersion))

    def __len__(self):
        return self.mean_.size

    def mean(self):
        return self.mean_.copy()

    def cdf(self, y):
        return self.family.cdf(np.asarray(y, dtype=np.float64), self.mean_, self.dispersion)

    def log_density(self, y):
        y = self.family.check_support(y)
        return self.family.logpdf(y, self.mean_, self.dispersion)

    def crps(self, y):
        y = _finite(y)
        return self.family.crps_array(y, self.mean_, self.dispersion)

    def component(self, i):
        return PredictiveDistribution(self.family, self.mean_[i], self.dispersion)


def _finite(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise DomainError("scores need finite observations")
    return y


def _bin(values, width):
    """Linear binning of draws onto nodes spaced ``<= width/100``."""
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span <= 1e-9 * width:
        return np.array([0.5 * (lo + hi)]), np.array([1.0])
    m = int(min(_MAX_BINS, max(2, math.ceil(_BIN_RESOLUTION * span / width) + 1)))
    step = span / (m - 1)
    w = _kernels.linear_deposit(values, lo, step, m)
    centers = lo + step * np.arange(m)
    keep = w > 0
    return centers[keep], w[keep]


class _TabulatedMixture:
    """Location mixture ``F(v) = sum_m w_m K(v - c_m)`` in a working coordinate.

    ``kind="gauss"``: ``K = Phi(./s)``, Lebesgue measure.
    ``kind="loggamma"``: ``K(d) = P(k, k e^d)`` (cdf of a mean-one gamma in
    log coordinates), measure ``e^v dv``, so integrals are on the original
    positive scale.
    """

    def __init__(self, centers, weights, kind, phi):
        self.centers = np.asarray(centers, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.kind = kind
        self.phi = float(phi)
        if kind == "gauss":
            self.width = math.sqrt(self.phi)
            qlo, qhi = -12.0 * self.width, 12.0 * self.width
        else:
            self.k = 1.0 / self.phi
            self.width = math.sqrt(float(special.polygamma(1, self.k)))
            base = stats.gamma(self.k, scale=1.0 / self.k)
            qlo, qhi = math.log(base.ppf(_TAIL)), math.log(base.isf(_TAIL))
        self.lo = float(self.centers.min()) + qlo
        self.hi = float(self.centers.max()) + qhi
        h = self.width / _GRID_PER_WIDTH
        n = int(min(40001, max(65, math.ceil((self.hi - self.lo) / h) + 1)))
        n += (n + 1) % 2
        self.grid = np.linspace(self.lo, self.hi, n)
        F = self.cdf(self.grid)
        meas = self._measure(self.grid)
        self._a = F * F * meas
        self._b = (1.0 - F) ** 2 * meas
        self._cum_a = integrate.cumulative_simpson(self._a, x=self.grid, initial=0.0)
        self._cum_b = integrate.cumulative_simpson(self._b, x=self.grid, initial=0.0)

    def _measure(self, v):
        return np.ones_like(v) if self.kind == "gauss" else np.exp(v)

    def _measure_integral(self, a, b):
        return b - a if self.kind == "gauss" else math.exp(b) - math.exp(a)

    def cdf(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=np.float64))
        if self.kind == "gauss":
            return _kernels.gauss_mixture_cdf(v, self.centers, self.weights, self.width)
        out = np.empty(v.size)
        chunk = max(1, 2_000_000 // max(1, self.centers.size))
        for s in range(0, v.size, chunk):
            d = v[s:s + chunk, None] - self.centers[None, :]
            out[s:s + chunk] = special.gammainc(self.k, self.k * np.exp(d)) @ self.weights
        return out

    def crps(self, t):
        """CRPS (in the original scale of the working measure) at coordinates ``t``."""
        t = np.asarray(t, dtype=np.float64)
        out = np.empty(t.size)
        grid = self.grid
        a_tot, b_tot = self._cum_a[-1], self._cum_b[-1]
        below = t <= self.lo
        above = t >= self.hi
        inside = ~(below | above)
        for i in np.flatnonzero(below):
            lo_edge = -math.inf if not np.isfinite(t[i]) else t[i]
            out[i] = (self._measure_integral(lo_edge, self.lo) if np.isfinite(lo_edge)
                      else self._measure_integral(-700.0, self.lo)) + b_tot
        for i in np.flatnonzero(above):
            out[i] = a_tot + self._measure_integral(self.hi, t[i])
        if inside.any():
            ti = t[inside]
            j = np.clip(np.searchsorted(grid, ti, side="right") - 1, 0, grid.size - 2)
            g0 = grid[j]
            mid = 0.5 * (g0 + ti)
            F_mid, F_t = self.cdf(mid), self.cdf(ti)
            m_mid, m_t = self._measure(mid), self._measure(ti)
            d = (ti - g0) / 6.0
            part_a = d * (self._a[j] + 4.0 * F_mid ** 2 * m_mid + F_t ** 2 * m_t)
            part_b = d * (self._b[j] + 4.0 * (1.0 - F_mid) ** 2 * m_mid + (1.0 - F_t) ** 2 * m_t)
            out[inside] = self._cum_a[j] + part_a + (b_tot - self._cum_b[j] - part_b)
        return out


def mixture_crps_gaussian(centers_draws, phi, t):
    """CRPS at ``t`` of the equal-weight mixture of ``N(c_s, phi)`` over draws ``c_s``."""
    c, w = _bin(np.asarray(centers_draws, dtype=np.float64), math.sqrt(phi))
    return _TabulatedMixture(c, w, "gauss", phi).crps(np.atleast_1d(t))


class MixturePrediction:
    """Equal-weight Monte Carlo mixture forecasts.

    Parameters
    ----------
    family, link
        Response family and link.
    dispersion : float
        Shared dispersion ``phi``.
    f : (n,) array
        Fixed-effects predictor per row.
    group : (n,) int array
        Row -> index into ``offsets``; ``-1`` for rows with no seen category
        (their forecast is the single component ``ED(g^{-1}(f), phi)``).
    offsets : (G, N) array
        Random-effect draws (summed over categorical blocks) per group.
    """

    def __init__(self, family, link, dispersion, f, group, offsets):
        self.family = get_family(family)
        self.link = get_link(link)
        self.dispersion = float(dispersion)
        self.f = np.asarray(f, dtype=np.float64)
        self.group = np.asarray(group, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, np.shape(offsets)[-1] if np.size(offsets) else 1)
        if self.f.shape != self.group.shape:
            raise ShapeError("f and group must align")

    def __len__(self):
        return self.f.size

    @property
    def n_draws(self):
        return self.offsets.shape[1]

    def _rows_by_group(self):
        order = np.argsort(self.group, kind="stable")
        groups, starts = np.unique(self.group[order], return_index=True)
        bounds = list(starts[1:]) + [order.size]
        for g, s, e in zip(groups, starts, bounds):
            yield int(g), order[s:e]

    def component_means(self, i):
        g = self.group[i]
        if g < 0:
            return self.family.clip_mean(self.link.inverse(np.array([self.f[i]])))
        return self.family.clip_mean(self.link.inverse(self.f[i] + self.offsets[g]))

    def components(self, i):
        return [PredictiveDistribution(self.family, m, self.dispersion) for m in self.component_means(i)]

    def _reduce(self, fn, y=None, chunk_elems=4_000_000):
        """Apply ``fn(rows, mu_matrix, y_rows)`` group by group, chunked."""
        out = np.empty(self.f.size)
        for g, rows in self._rows_by_group():
            if g < 0:
                mu = self.family.clip_mean(self.link.inverse(self.f[rows]))[:, None]
                out[rows] = fn(mu, None if y is None else y[rows])
                continue
            step = max(1, chunk_elems // self.n_draws)
            for s in range(0, rows.size, step):
                r = rows[s:s + step]
                mu = self.family.clip_mean(self.link.inverse(self.f[r, None] + self.offsets[g][None, :]))
                out[r] = fn(mu, None if y is None else y[r])
        return out

    def mean(self):
        if self.link.name == "identity":
            off = np.zeros(self.f.size)
            seen = self.group >= 0
            off[seen] = self.offsets.mean(axis=1)[self.group[seen]]
            return self.f + off
        return self._reduce(lambda mu, _: mu.mean(axis=1))

    def cdf(self, y):
        y = np.asarray(y, dtype=np.float64)
        fam, phi = self.family, self.dispersion
        return self._reduce(lambda mu, yy: fam.cdf(yy[:, None], mu, phi).mean(axis=1), y)

    def log_density(self, y):
        """``log (1/N) sum_s p(y | mu_s, phi)`` per row."""
        y = self.family.check_support(y)
        fam, phi = self.family, self.dispersion

        def fn(mu, yy):
            lp = fam.logpdf(yy[:, None], mu, phi)
            return special.logsumexp(lp, axis=1) - math.log(mu.shape[1])

        return self._reduce(fn, y)

    def crps(self, y):
        y = _finite(y)
        fam, link, phi = self.family, self.link, self.dispersion
        out = np.empty(y.size)
        if isinstance(fam, Bernoulli):
            return (y - self.mean()) ** 2
        for g, rows in self._rows_by_group():
            if g < 0:
                mu = fam.clip_mean(link.inverse(self.f[rows]))
                out[rows] = fam.crps_array(y[rows], mu, phi)
                continue
            draws = self.offsets[g]
            if isinstance(fam, Gaussian) and link.name == "identity":
                c, w = _bin(draws, math.sqrt(phi))
                out[rows] = _TabulatedMixture(c, w, "gauss", phi).crps(y[rows] - self.f[rows])
            elif isinstance(fam, Gamma) and link.name == "log":
                tab = _TabulatedMixture(*_bin(draws, _loggamma_width(phi)), "loggamma", phi)
                out[rows] = self._gamma_crps(tab, y[rows], self.f[rows])
            else:
                for i in rows:
                    out[i] = self._row_crps(i, y[i])
        return out

    @staticmethod
    def _gamma_crps(tab, y, f):
        res = np.empty(y.size)
        pos = y > 0
        res[pos] = np.exp(f[pos]) * tab.crps(np.log(y[pos]) - f[pos])
        neg = ~pos
        if neg.any():
            res[neg] = -y[neg] + np.exp(f[neg]) * tab.crps(np.full(neg.sum(), -np.inf))
        return res

    def _row_crps(self, i, yi):
        fam, phi = self.family, self.dispersion
        mu = self.component_means(i)
        if isinstance(fam, Gaussian):
            c, w = _bin(mu, math.sqrt(phi))
            return float(_TabulatedMixture(c, w, "gauss", phi).crps(np.array([yi]))[0])
        if isinstance(fam, Gamma):
            tab = _TabulatedMixture(*_bin(np.log(mu), _loggamma_width(phi)), "loggamma", phi)
            return float(self._gamma_crps(tab, np.array([yi]), np.zeros(1))[0])
        if isinstance(fam, Poisson):
            top = int(max(yi, stats.poisson.isf(1e-16, mu.max()))) + 2
            k = np.arange(top + 1)
            F = stats.poisson.cdf(k[:, None], mu[None, :]).mean(axis=1)
            return float(np.sum((F - (k >= yi)) ** 2))
        raise DomainError(f"no mixture CRPS for family {fam.name}")


def _loggamma_width(phi):
    return math.sqrt(float(special.polygamma(1, 1.0 / phi)))
