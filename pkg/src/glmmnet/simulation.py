"""Synthetic mixed-effects environments built on the Friedman function.

Generation for a signal-to-noise triple normalised to ``(s1, s2, s3)``:

1. ``u_j ~ N(0, s2^2)`` for ``j = 0..q-1`` and ``X ~ U(0, 1)^{n x 10}``.
2. ``f(X)`` is rescaled multiplicatively so that its training mean equals
   ``s1`` (test rows reuse the training constant).
3. ``mu = g^{-1}(f(X) + u_{j[i]})`` and ``y ~ ED(mu, phi)`` with ``phi = s3^2``.

Categories are allocated either balanced (round robin over a shuffled
order) or skewed (a scaled Beta(2, 5) draw, with every category guaranteed
at least one training row).
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset
from .ed_family import get_family, get_link
from .errors import DomainError, ParameterError

N_FEATURES = 10
SKEW_BETA = (2.0, 5.0)


def friedman(x):
    """``10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5`` (rows of a matrix or one vector)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 5:
        raise DomainError("the Friedman function needs at least five inputs")
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise DomainError("Friedman inputs must lie in [0, 1]")
    x1, x2, x3, x4, x5 = (x[..., i] for i in range(5))
    return 10.0 * np.sin(np.pi * x1 * x2) + 20.0 * (x3 - 0.5) ** 2 + 10.0 * x4 + 5.0 * x5


def allocate_categories(n, q, distribution, rng):
    """Category index per row in ``0..q-1``.

    ``balanced`` gives counts differing by at most one.  ``skewed`` puts one
    row in every category and draws the remaining ``n - q`` rows as
    ``floor(q * B)`` with ``B ~ Beta(2, 5)``.
    """
    n, q = int(n), int(q)
    if q < 1 or q > n:
        raise ParameterError(f"need 1 <= q <= n, got q={q}, n={n}")
    if distribution == "balanced":
        cats = np.arange(n) % q
    elif distribution == "skewed":
        extra = np.minimum(np.floor(q * rng.beta(*SKEW_BETA, size=n - q)), q - 1).astype(np.int64)
        cats = np.concatenate([np.arange(q), extra])
    else:
        raise ParameterError(f"unknown category distribution {distribution!r}")
    return rng.permutation(cats).astype(np.int64)


def normalize_ratio(ratio):
    r = np.asarray(ratio, dtype=np.float64)
    if r.shape != (3,) or np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise ParameterError("signal-to-noise ratio must be three positive numbers")
    return r / r.sum()


@dataclass(frozen=True)
class SimulationConfig:
    signal_to_noise: tuple = (4.0, 1.0, 1.0)
    family: str = "gaussian"
    link: str = "identity"
    category_distribution: str = "balanced"
    n_train: int = 5000
    n_test: int = 2500
    q: int = 100
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        normalize_ratio(self.signal_to_noise)
        get_family(self.family)
        get_link(self.link)
        if self.q > self.n_train or self.q < 1:
            raise ParameterError("need 1 <= q <= n_train")
        if self.n_test < 0:
            raise ParameterError("n_test must be non-negative")
        if self.category_distribution not in ("balanced", "skewed"):
            raise ParameterError(f"unknown category distribution {self.category_distribution!r}")

    @property
    def components(self):
        """``(mu_f, sigma_u, sigma_eps)`` after normalisation."""
        return tuple(float(v) for v in normalize_ratio(self.signal_to_noise))

    @property
    def dispersion(self):
        return self.components[2] ** 2

    def with_seed(self, seed):
        d = asdict(self)
        d["seed"] = int(seed)
        return SimulationConfig(**d)

    def to_dict(self):
        d = asdict(self)
        d["signal_to_noise"] = list(self.signal_to_noise)
        return d


@dataclass
class GeneratedData:
    train: Dataset
    test: Dataset
    u: np.ndarray
    f_train: np.ndarray
    f_test: np.ndarray
    scale: float
    config: SimulationConfig

    def record(self):
        mu_f, sigma_u, sigma_eps = self.config.components
        return {"config": self.config.to_dict(), "mu_f": mu_f, "sigma_u": sigma_u, "sigma_eps": sigma_eps,
                "dispersion": self.config.dispersion, "rescale": self.scale,
                "train_checksum": self.train.checksum(), "test_checksum": self.test.checksum()}

    def checksum(self):
        return self.train.checksum()[:8] + self.test.checksum()[:8]

    def export(self, prefix):
        """Write ``<prefix>_train.csv``, ``<prefix>_test.csv`` and ``<prefix>_truth.json``."""
        self.train.to_csv(f"{prefix}_train.csv", {"f_true": self.f_train})
        self.test.to_csv(f"{prefix}_test.csv", {"f_true": self.f_test})
        with open(f"{prefix}_truth.json", "w") as fh:
            json.dump({**self.record(), "u": self.u.tolist()}, fh, indent=2)


def generate(config, rng=None):
    """Simulate one environment; ``rng`` defaults to ``default_rng(config.seed)``."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    mu_f, sigma_u, sigma_eps = config.components
    family, link = get_family(config.family), get_link(config.link)
    phi = sigma_eps ** 2
    u = rng.normal(0.0, sigma_u, size=config.q)
    X_tr = rng.uniform(size=(config.n_train, N_FEATURES))
    X_te = rng.uniform(size=(config.n_test, N_FEATURES))
    raw_tr = friedman(X_tr)
    scale = mu_f / float(np.mean(raw_tr))
    f_tr, f_te = raw_tr * scale, friedman(X_te) * scale
    c_tr = allocate_categories(config.n_train, config.q, config.category_distribution, rng)
    if config.category_distribution == "balanced":
        c_te = rng.permutation(np.arange(config.n_test) % config.q).astype(np.int64)
    else:
        c_te = np.minimum(np.floor(config.q * rng.beta(*SKEW_BETA, size=config.n_test)),
                          config.q - 1).astype(np.int64)
    y_tr = family.rvs(link.inverse(f_tr + u[c_tr]), phi, rng)
    y_te = family.rvs(link.inverse(f_te + u[c_te]), phi, rng)
    train = Dataset(X_tr, c_tr, y_tr, config.q)
    test = Dataset(X_te, c_te, y_te, config.q)
    return GeneratedData(train, test, u, f_tr, f_te, scale, config)


def table3_experiments(n_train=5000, n_test=2500, q=100):
    """The six benchmark environments, numbered 1 to 6 in ``name``."""
    rows = [
        ((4, 1, 1), "gaussian", "identity", "balanced"),
        ((4, 1, 1), "gamma", "log", "balanced"),
        ((4, 1, 1), "gaussian", "identity", "skewed"),
        ((4, 1, 2), "gaussian", "identity", "balanced"),
        ((8, 1, 4), "gaussian", "identity", "balanced"),
        ((8, 1, 4), "gamma", "log", "skewed"),
    ]
    return [SimulationConfig(tuple(float(v) for v in r), fam, link, dist, n_train, n_test, q, 0, str(i + 1))
            for i, (r, fam, link, dist) in enumerate(rows)]
