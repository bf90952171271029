"""Generalised linear models fitted by iteratively reweighted least squares.

Three designs treat the high-cardinality feature differently:

``ignore``
    Intercept plus standard features (complete pooling).
``one_hot``
    Adds one indicator per non-reference level (reference-level coding;
    level 0 is the reference and unseen levels map to it).
``encoded``
    Adds a single column ``g(z')`` built from a GLMM encoding ``z'``.
"""

import math

import numpy as np
from scipy import linalg

from ..data import Standardizer
from ..ed_family import get_family, get_link
from ..errors import ConvergenceError, DomainError, ParameterError, SingularDesignError
from ..predictive import PointPrediction

DESIGNS = ("ignore", "one_hot", "encoded")


def design_matrix(X, category, design, n_categories, z=None, link=None):
    """Assemble ``[1, X, design columns]`` and the column names."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    cols = [np.ones((n, 1)), X]
    names = ["(intercept)"] + [f"x{i + 1}" for i in range(X.shape[1])]
    if design == "one_hot":
        cat = np.asarray(category, dtype=np.int64).reshape(n)
        q = int(n_categories)
        if np.any(cat >= q):
            raise IndexError(f"category index >= {q}")
        dummies = np.zeros((n, max(q - 1, 0)))
        rows = np.flatnonzero(cat >= 1)
        dummies[rows, cat[rows] - 1] = 1.0
        cols.append(dummies)
        names += [f"cat{j}" for j in range(1, q)]
    elif design == "encoded":
        if z is None:
            raise ParameterError("the encoded design needs z' values")
        z = np.asarray(z, dtype=np.float64).reshape(n)
        cols.append(get_link(link or "identity").link(z)[:, None])
        names.append("z_encoded")
    elif design != "ignore":
        raise ParameterError(f"unknown design {design!r}; expected one of {DESIGNS}")
    return np.hstack(cols), names


def check_rank(M, names, rtol=1e-10):
    """Raise :class:`SingularDesignError` naming dependent columns."""
    if M.shape[1] == 0:
        return
    _, R, piv = linalg.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * max(diag[0], 1e-300))) if diag.size else 0
    if rank < M.shape[1] or M.shape[0] < M.shape[1]:
        bad = [names[i] for i in piv[rank:]]
        raise SingularDesignError(f"design is rank deficient ({rank} < {M.shape[1]}); dependent columns: {bad}", bad)


def _start_mean(family, y):
    if family.name == "bernoulli":
        return (y + 0.5) / 2.0
    if family.name == "poisson":
        return y + 0.1
    if family.name == "gamma":
        return np.maximum(y, 1e-8)
    return y.copy()


def glm_nll(coef, M, y, family, link, phi=1.0):
    """Negative log-likelihood of a GLM at ``coef`` (used for gradient checks)."""
    mu = family.clip_mean(link.inverse(M @ coef))
    return float(-np.sum(family.logpdf(y, mu, phi)))


def glm_score(coef, M, y, family, link, phi=1.0):
    """Gradient of :func:`glm_nll` with respect to ``coef``."""
    eta = M @ coef
    mu = family.clip_mean(link.inverse(eta))
    return -M.T @ (family.dlogpdf_dmu(y, mu, phi) * link.inverse_derivative(eta))


def irls(M, y, family, link, max_iter=50, tol=1e-8, names=None, raise_on_fail=True):
    """Fit ``g(E y) = M beta`` by IRLS with step halving.

    Returns ``(beta, deviance_trace, converged)``.  Convergence is declared
    once the relative change in deviance drops below ``tol``.
    """
    family, link = get_family(family), get_link(link)
    names = names or [f"c{i}" for i in range(M.shape[1])]
    check_rank(M, names)
    mu = _start_mean(family, y)
    eta = link.link(mu)
    beta = None
    dev = math.inf
    trace = []

    def valid(mu_):
        return np.all(np.isfinite(mu_)) and np.all(family.in_mean_domain(mu_))

    for _ in range(max_iter):
        d = link.inverse_derivative(eta)
        w = d * d / family.variance(mu)
        zwork = eta + (y - mu) / d
        sw = np.sqrt(w)
        new_beta, *_ = linalg.lstsq(M * sw[:, None], zwork * sw, lapack_driver="gelsy")
        for _half in range(30):
            new_eta = M @ new_beta
            try:
                with np.errstate(all="ignore"):
                    new_mu = link.inverse(new_eta)
            except DomainError:
                new_mu = np.full_like(new_eta, np.nan)
            new_dev = float(np.sum(family.unit_deviance(y, family.clip_mean(new_mu)))) if valid(new_mu) else math.inf
            if beta is None or (math.isfinite(new_dev) and new_dev <= dev * (1 + 1e-12) + 1e-300):
                break
            new_beta = 0.5 * (new_beta + beta)
        if not math.isfinite(new_dev):
            if raise_on_fail:
                raise ConvergenceError("IRLS produced an invalid mean", trace)
            break
        beta, eta, mu = new_beta, new_eta, family.clip_mean(new_mu)
        trace.append(new_dev)
        change = abs(new_dev - dev) / max(abs(new_dev), 1e-300) if math.isfinite(dev) else math.inf
        dev = new_dev
        if change < tol or new_dev == 0.0:
            return beta, trace, True
    if raise_on_fail:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations", trace)
    return beta, trace, False


class GLMModel:
    """A fitted GLM; features are standardised with training statistics."""

    def __init__(self, family, link, design, coef, names, standardizer, n_categories, trace, dispersion):
        self.family = family
        self.link = link
        self.design = design
        self.coef = coef
        self.names = names
        self.standardizer = standardizer
        self.n_categories = n_categories
        self.deviance_trace = trace
        self.dispersion = dispersion

    @property
    def intercept(self):
        return float(self.coef[0])

    @property
    def n_iterations(self):
        return len(self.deviance_trace)

    def _matrix(self, X, category=None, z=None):
        Xs = self.standardizer.transform(X)
        cat = None
        if self.design == "one_hot":
            cat = np.asarray(category, dtype=np.int64).reshape(-1)
            cat = np.where(cat < 0, 0, cat)
        M, _ = design_matrix(Xs, cat, self.design, self.n_categories, z, self.link)
        return M

    def linear_predictor(self, X, category=None, z=None):
        return self._matrix(X, category, z) @ self.coef

    def predict(self, X, category=None, z=None):
        return self.family.clip_mean(self.link.inverse(self.linear_predictor(X, category, z)))

    def predict_distribution(self, X, category=None, z=None):
        return PointPrediction(self.family, self.predict(X, category, z), self.dispersion)


def fit_glm_irls(dataset, design="ignore", family="gaussian", link=None, z=None, max_iter=50, tol=1e-8,
                 standardize=True):
    """Fit a GLM to ``dataset`` with the chosen categorical design.

    ``z`` holds the GLMM encodings of the training rows for ``design="encoded"``.
    The reported dispersion is the maximum-likelihood value at the fitted means.
    """
    from .dispersion import estimate_dispersion

    family = get_family(family)
    link = get_link(family.default_link if link is None else link)
    if design not in DESIGNS:
        raise ParameterError(f"unknown design {design!r}; expected one of {DESIGNS}")
    y = family.check_support(dataset.y)
    std = Standardizer.fit(dataset.X) if standardize else Standardizer.identity(dataset.n_features)
    cat = dataset.category.reshape(len(dataset), -1)[:, 0] if design == "one_hot" else None
    q = dataset.n_categories if np.ndim(dataset.n_categories) == 0 else dataset.n_categories[0]
    M, names = design_matrix(std.transform(dataset.X), cat, design, q, z, link)
    if M.shape[0] < M.shape[1]:
        raise SingularDesignError(f"{M.shape[0]} rows cannot identify {M.shape[1]} coefficients", names)
    coef, trace, _ = irls(M, y, family, link, max_iter=max_iter, tol=tol, names=names)
    mu = family.clip_mean(link.inverse(M @ coef))
    phi = estimate_dispersion(mu, y, family)
    return GLMModel(family, link, design, coef, names, std, q, trace, phi)


def balance_gaps(model, dataset, z=None):
    """Per-category ``|sum fitted - sum observed| / max(|sum observed|, tiny)``."""
    cat = dataset.category.reshape(len(dataset), -1)[:, 0]
    fitted = model.predict(dataset.X, cat, z)
    q = model.n_categories
    obs = np.bincount(cat, weights=dataset.y, minlength=q)
    fit = np.bincount(cat, weights=fitted, minlength=q)
    present = np.bincount(cat, minlength=q) > 0
    return np.abs(fit - obs)[present] / np.maximum(np.abs(obs[present]), 1e-300)
