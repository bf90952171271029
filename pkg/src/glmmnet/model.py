"""GLMMNet: feed-forward fixed effects plus a variational random-effects layer.

The predictor for row ``i`` is ``eta_i = f(x_i) + sum_k u^{(k)}_{j_k[i]}``
with one Gaussian random-effects block per high-cardinality feature, and
the response is ``ED(g^{-1}(eta_i), phi)``.  Training minimises the
negative ELBO

    (B / n) * KL[q || prior] - sum_{i in batch} (1/S) sum_s log p(y_i | mu_i^(s), phi)

over mini-batches of size ``B`` so that one epoch adds up to one KL term.
"""

import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels
from .data import Dataset, Standardizer
from .diff_core import Adam, FixedEffectsNet
from .ed_family import Gaussian, get_family, get_link
from .errors import ParameterError, ShapeError, StateError, TrainingError
from .predictive import MixturePrediction
from .variational import REPosterior, REPrior, effective_scales, kl_to_prior, posterior_summary, softplus

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class TrainingConfig:
    """Hyperparameters of :func:`fit_glmmnet`.

    ``prior_scale`` is a float shared by every block or one float per block.
    ``dispersion_init`` chooses the starting dispersion: ``"marginal"`` is
    the variance of ``g(y + delta)``; ``"residual"`` is the residual variance
    of a linear least-squares fit of ``g(y + delta)`` on the standardised
    features and category indicators.  ``dispersion_shift`` is ``delta``,
    used only when a restricted-domain link meets a non-positive response.
    ``validation_metric`` selects the early-stopping criterion.
    ``scale_learning_rate`` is the Adam step size of the raw posterior
    scales; ``None`` uses ``learning_rate``.  Each step moves a raw scale by
    about one step size, so with the default the posterior scales stay
    close to their small starting value over a typical training run.
    """

    hidden: tuple = (64, 32, 16)
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 500
    patience: int = 10
    validation_fraction: float = 0.2
    mc_samples: int = 1
    weight_decay: float = 0.0
    prior_scale: object = 1.0
    scale_multiplier: float = 0.01
    dispersion_shift: float = 1e-3
    standardize: bool = True
    validation_metric: str = "nll"
    dispersion_init: str = "residual"
    scale_learning_rate: object = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h < 1 for h in self.hidden):
            raise ParameterError("hidden widths must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1 or self.mc_samples < 1:
            raise ParameterError("batch size, epoch cap, patience and MC samples must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ParameterError("validation fraction must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ParameterError("weight decay must be non-negative")
        if not self.learning_rate > 0:
            raise ParameterError("learning rate must be positive")
        if self.scale_learning_rate is not None and not self.scale_learning_rate > 0:
            raise ParameterError("scale learning rate must be positive")
        if self.dispersion_init not in ("residual", "marginal"):
            raise ParameterError("dispersion_init must be 'residual' or 'marginal'")
        if self.validation_metric not in ("deviance", "nll"):
            raise ParameterError("validation_metric must be 'deviance' or 'nll'")

    def replace(self, **changes):
        new = copy.copy(self)
        for key, value in changes.items():
            if not hasattr(new, key):
                raise ParameterError(f"unknown training option {key!r}")
            setattr(new, key, value)
        new.__post_init__()
        return new


@dataclass
class FitReport:
    epochs_run: int = 0
    train_elbo: float = float("nan")
    validation_trace: list = field(default_factory=list)
    training_trace: list = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int = 0

    @property
    def best_validation(self):
        return min(self.validation_trace) if self.validation_trace else float("nan")

    def to_dict(self):
        return {
            "epochs_run": self.epochs_run,
            "train_elbo": self.train_elbo,
            "validation_trace": list(map(float, self.validation_trace)),
            "training_trace": list(map(float, self.training_trace)),
            "stopped_early": bool(self.stopped_early),
            "best_epoch": self.best_epoch,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["epochs_run"]), float(d["train_elbo"]), list(d["validation_trace"]),
                   list(d.get("training_trace", [])), bool(d["stopped_early"]), int(d["best_epoch"]))


def _as_blocks(n_categories):
    if np.ndim(n_categories) == 0:
        return (int(n_categories),)
    return tuple(int(q) for q in n_categories)


def _category_matrix(category, n_rows, sizes, allow_unseen=True):
    cat = np.asarray(category, dtype=np.int64)
    if cat.ndim == 1:
        cat = cat[:, None]
    if cat.shape != (n_rows, len(sizes)):
        raise ShapeError(f"expected category codes of shape ({n_rows}, {len(sizes)}), got {cat.shape}")
    for k, q in enumerate(sizes):
        col = cat[:, k]
        if np.any(col >= q):
            raise IndexError(f"category index >= {q} in block {k}")
        lowest = -1 if allow_unseen else 0
        if np.any(col < lowest):
            raise IndexError(f"category index < {lowest} in block {k}")
    return cat


def _residual_variance(gy, Xs, cat, sizes):
    """Residual variance of a least-squares fit of ``g(y)`` on features and category indicators.

    Falls back to the marginal variance when the fit has no residual degrees of freedom.
    """
    n = gy.size
    cols = [np.ones((n, 1)), Xs]
    for k, q in enumerate(sizes):
        onehot = np.zeros((n, q))
        onehot[np.arange(n), cat[:, k]] = 1.0
        cols.append(onehot[:, 1:])
    M = np.hstack(cols)
    if n <= M.shape[1] + 1:
        return float(np.var(gy)) if n > 1 else 1.0
    coef, *_ = np.linalg.lstsq(M, gy, rcond=None)
    resid = gy - M @ coef
    rank = np.linalg.matrix_rank(M)
    return float(resid @ resid / max(n - rank, 1))


class GLMMNet:
    """Mixed-effects network for an ED-family response.

    Parameters
    ----------
    n_features : int
        Number of standard features.
    n_categories : int or tuple of int
        Levels per high-cardinality feature (one random-effects block each).
    family, link
        Response family and link; the link defaults to the family's default.
    config : TrainingConfig, optional
    rng : numpy Generator, optional
        Used for the weight initialisation.
    """

    def __init__(self, n_features, n_categories, family="gaussian", link=None, config=None, rng=None):
        self.family = get_family(family)
        self.link = get_link(self.family.default_link if link is None else link)
        self.config = TrainingConfig() if config is None else config
        self.sizes = _as_blocks(n_categories)
        if any(q < 1 for q in self.sizes):
            raise ParameterError("every block needs at least one category")
        rng = np.random.default_rng() if rng is None else rng
        self.net = FixedEffectsNet.build(n_features, self.config.hidden, rng)
        scales = self.config.prior_scale
        scales = [float(scales)] * len(self.sizes) if np.ndim(scales) == 0 else [float(s) for s in scales]
        if len(scales) != len(self.sizes):
            raise ShapeError("one prior scale per random-effects block is required")
        self.priors = [REPrior(s) for s in scales]
        self.posteriors = [REPosterior.initial(q, self.config.scale_multiplier) for q in self.sizes]
        self.raw_dispersion = np.zeros(1)
        self.standardizer = Standardizer.identity(n_features)
        self.report = None

    # ------------------------------------------------------------------ state
    @property
    def n_features(self):
        return self.net.input_width

    @property
    def n_categories(self):
        return self.sizes[0] if len(self.sizes) == 1 else self.sizes

    @property
    def dispersion(self):
        if self.family.fixed_dispersion:
            return 1.0
        return float(softplus(self.raw_dispersion)[0])

    @dispersion.setter
    def dispersion(self, value):
        if not value > 0:
            raise ParameterError("dispersion must be positive")
        self.raw_dispersion[0] = float(np.log(np.expm1(value))) if value < 30 else float(value)

    @property
    def fixed_dispersion(self):
        return self.family.fixed_dispersion

    def parameters(self):
        """Trainable arrays in a fixed order: net, then (loc, raw) per block, then raw phi."""
        params = list(self.net.parameters())
        for post in self.posteriors:
            params.extend([post.loc, post.raw_scale])
        params.append(self.raw_dispersion)
        return params

    def parameter_names(self):
        names = []
        for i, _ in enumerate(self.net.layers):
            names.extend([f"layer{i}.weights", f"layer{i}.biases"])
        for k, _ in enumerate(self.posteriors):
            names.extend([f"re{k}.loc", f"re{k}.raw_scale"])
        names.append("raw_dispersion")
        return names

    def weight_decay_vector(self, lam):
        mask = self.net.weight_mask() + [False] * (2 * len(self.posteriors) + 1)
        return [lam if m else 0.0 for m in mask]

    def learning_rate_scales(self):
        """Per-parameter multipliers of the learning rate (raw scales may differ)."""
        cfg = self.config
        ratio = 1.0 if cfg.scale_learning_rate is None else cfg.scale_learning_rate / cfg.learning_rate
        return [1.0] * (2 * len(self.net.layers)) + [1.0, ratio] * len(self.posteriors) + [1.0]

    # ------------------------------------------------------------- internals
    def fixed_effects(self, X, standardized=False):
        """``f(x)`` per row (before any random effect)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None] if self.n_features == 1 else X[None, :]
        Xs = X if standardized else self.standardizer.transform(X)
        return self.net.forward(Xs, record=False)

    def _offsets(self, cat, draws):
        """``sum_k u^{(k)}[cat_k]`` for draws ``(S, q_k)`` per block -> ``(S, n)``."""
        total = 0.0
        for k, u in enumerate(draws):
            col = cat[:, k]
            vals = u[:, np.maximum(col, 0)]
            total = total + np.where(col >= 0, vals, 0.0)
        return total

    def loss_and_grad(self, Xs, cat, y, eps, n_total, grad=True):
        """Negative ELBO of a batch on standardised inputs.

        ``eps`` is a list with one ``(S, q_k)`` array of standard-normal draws
        per block.  Returns the loss, and with ``grad=True`` also the gradients
        aligned with :meth:`parameters`.
        """
        n = y.size
        if n == 0:
            raise ShapeError("empty batch")
        if n_total < n:
            raise ParameterError("n_total must be at least the batch size")
        eps = [np.atleast_2d(np.asarray(e, dtype=np.float64)) for e in eps]
        S = eps[0].shape[0]
        for e, q in zip(eps, self.sizes):
            if e.shape != (S, q):
                raise ShapeError(f"expected draws of shape ({S}, {q}), got {e.shape}")
        sigmas = [effective_scales(p) for p in self.posteriors]
        draws = [p.loc + s * e for p, s, e in zip(self.posteriors, sigmas, eps)]
        f = self.net.forward(Xs, record=grad)
        eta = f[None, :] + self._offsets(cat, draws)
        mu = self.family.clip_mean(self.link.inverse(eta))
        phi = self.dispersion
        lp = self.family.logpdf(y[None, :], mu, phi)
        frac = n / float(n_total)
        kls = [kl_to_prior(p, pr, grad=grad) for p, pr in zip(self.posteriors, self.priors)]
        kl = sum(k[0] for k in kls) if grad else sum(kls)
        loss = frac * kl - float(lp.sum()) / S
        if not grad:
            return loss
        d_eta = -(self.family.dlogpdf_dmu(y[None, :], mu, phi) * self.link.inverse_derivative(eta)) / S
        self.net.backward(d_eta.sum(axis=0))
        grads = [g.copy() for g in self.net.gradients()]
        for k, (post, sig, e) in enumerate(zip(self.posteriors, sigmas, eps)):
            col = cat[:, k]
            seen = col >= 0
            seg = _kernels.segment_sum(d_eta[:, seen].T, col[seen], self.sizes[k]).T  # (S, q)
            _, d_loc_kl, d_raw_kl = kls[k]
            d_loc = seg.sum(axis=0) + frac * d_loc_kl
            d_sig = (seg * e).sum(axis=0)
            d_raw = d_sig * post.multiplier * special.expit(post.raw_scale) + frac * d_raw_kl
            grads.extend([d_loc, d_raw])
        if self.fixed_dispersion:
            grads.append(np.zeros(1))
        else:
            d_phi = -float(self.family.dlogpdf_dphi(y[None, :], mu, phi).sum()) / S
            grads.append(np.array([d_phi * special.expit(self.raw_dispersion[0])]))
        return loss, grads

    def _posterior_mean_mu(self, Xs, cat):
        f = self.net.forward(Xs, record=False)
        eta = f + self._offsets(cat, [p.loc[None, :] for p in self.posteriors])[0]
        return self.family.clip_mean(self.link.inverse(eta))

    def plugin_nll(self, Xs, cat, y):
        """Mean ``-log p(y | g^{-1}(f + E_q u), phi)``."""
        return float(-np.mean(self.family.logpdf(y, self._posterior_mean_mu(Xs, cat), self.dispersion)))

    def validation_loss(self, Xs, cat, y):
        """Early-stopping criterion on held-out rows.

        ``config.validation_metric = "nll"`` (default) is :meth:`plugin_nll`.
        ``"deviance"`` is the mean unit deviance at the posterior-mean
        predictor, which does not involve ``phi``.
        """
        if self.config.validation_metric == "nll":
            return self.plugin_nll(Xs, cat, y)
        return float(np.mean(self.family.unit_deviance(y, self._posterior_mean_mu(Xs, cat))))

    def gaussian_elbo(self, Xs, cat, y):
        """Exact ELBO for the Gaussian/identity model (no sampling)."""
        if not (isinstance(self.family, Gaussian) and self.link.name == "identity"):
            raise StateError("the exact ELBO needs a Gaussian response with identity link")
        f = self.net.forward(Xs, record=False)
        eta = f + self._offsets(cat, [p.loc[None, :] for p in self.posteriors])[0]
        var = self._offsets(cat, [effective_scales(p)[None, :] ** 2 for p in self.posteriors])[0]
        phi = self.dispersion
        expected = -0.5 * y.size * (_LOG_2PI + math.log(phi)) - np.sum((y - eta) ** 2 + var) / (2.0 * phi)
        kl = sum(kl_to_prior(p, pr) for p, pr in zip(self.posteriors, self.priors))
        return float(expected - kl)

    def elbo_estimate(self, Xs, cat, y, rng, n_samples=32):
        if isinstance(self.family, Gaussian) and self.link.name == "identity":
            return self.gaussian_elbo(Xs, cat, y)
        eps = [rng.standard_normal((n_samples, q)) for q in self.sizes]
        return -self.loss_and_grad(Xs, cat, y, eps, y.size, grad=False)

    # --------------------------------------------------------------- training
    def _initialise(self, Xs, cat, y):
        fam, link = self.family, self.link
        ybar = float(np.mean(y))
        if link.name == "log":
            ybar = max(ybar, self.config.dispersion_shift)
        elif link.name == "logit":
            ybar = min(max(ybar, 1e-3), 1.0 - 1e-3)
        elif link.name == "inverse" and ybar == 0:
            ybar = self.config.dispersion_shift
        self.net.layers[-1].biases[:] = float(link.link(ybar))
        if not fam.fixed_dispersion:
            if link.name == "identity":
                gy = y
            else:
                shift = 0.0 if np.all(y > 0) else self.config.dispersion_shift
                gy = link.link(y + shift)
            if self.config.dispersion_init == "residual":
                phi0 = _residual_variance(gy, Xs, cat, self.sizes)
            else:
                phi0 = float(np.var(gy)) if gy.size > 1 else 1.0
            self.dispersion = max(phi0, 1e-6)

    def fit(self, dataset, rng=None, validation=None):
        """Train on ``dataset``; returns the :class:`FitReport`.

        ``validation`` optionally supplies an explicit held-out
        :class:`Dataset`; otherwise ``config.validation_fraction`` of the rows
        is held out at random.
        """
        cfg = self.config
        rng = np.random.default_rng() if rng is None else rng
        if len(dataset) == 0:
            raise ShapeError("cannot fit on an empty dataset")
        if dataset.n_features != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {dataset.n_features}")
        y_all = self.family.check_support(dataset.y)
        cat_all = _category_matrix(dataset.category, len(dataset), self.sizes, allow_unseen=False)
        if validation is None:
            n_val = int(round(cfg.validation_fraction * len(dataset)))
            if len(dataset) - n_val < 1:
                n_val = 0
            perm = rng.permutation(len(dataset))
            val_rows, train_rows = np.sort(perm[:n_val]), np.sort(perm[n_val:])
            X_tr, c_tr, y_tr = dataset.X[train_rows], cat_all[train_rows], y_all[train_rows]
            X_va, c_va, y_va = dataset.X[val_rows], cat_all[val_rows], y_all[val_rows]
        else:
            X_tr, c_tr, y_tr = dataset.X, cat_all, y_all
            X_va = validation.X
            c_va = _category_matrix(validation.category, len(validation), self.sizes)
            y_va = self.family.check_support(validation.y)
        self.standardizer = Standardizer.fit(X_tr) if cfg.standardize else Standardizer.identity(self.n_features)
        Xs_tr = self.standardizer.transform(X_tr)
        Xs_va = self.standardizer.transform(X_va)
        self._initialise(Xs_tr, c_tr, y_tr)

        params = self.parameters()
        opt = Adam(params, lr=cfg.learning_rate, weight_decay=self.weight_decay_vector(cfg.weight_decay),
                   lr_scale=self.learning_rate_scales())
        report = FitReport()
        n_tr = y_tr.size
        use_val = y_va.size > 0
        best = math.inf
        best_params = [p.copy() for p in params]
        stale = 0
        for epoch in range(1, cfg.max_epochs + 1):
            order = rng.permutation(n_tr)
            epoch_loss = 0.0
            for start in range(0, n_tr, cfg.batch_size):
                rows = order[start:start + cfg.batch_size]
                eps = [rng.standard_normal((cfg.mc_samples, q)) for q in self.sizes]
                loss, grads = self.loss_and_grad(Xs_tr[rows], c_tr[rows], y_tr[rows], eps, n_tr)
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite training loss in epoch {epoch}", epoch)
                try:
                    opt.step(params, grads)
                except TrainingError as exc:
                    raise TrainingError(f"{exc} in epoch {epoch}", epoch) from None
                epoch_loss += loss
            val = self.validation_loss(Xs_va, c_va, y_va) if use_val else epoch_loss / n_tr
            if not math.isfinite(val):
                raise TrainingError(f"non-finite validation loss in epoch {epoch}", epoch)
            report.training_trace.append(epoch_loss)
            report.validation_trace.append(val)
            report.epochs_run = epoch
            if val < best:
                best, stale = val, 0
                report.best_epoch = epoch
                best_params = [p.copy() for p in params]
            else:
                stale += 1
                if stale >= cfg.patience:
                    report.stopped_early = True
                    break
        for p, b in zip(params, best_params):
            p[...] = b
        report.train_elbo = self.elbo_estimate(Xs_tr, c_tr, y_tr, rng)
        self.report = report
        return report

    # ------------------------------------------------------------- prediction
    def predict_distribution(self, X, category=None, n_draws=10_000, rng=None, eps=None):
        """Monte Carlo posterior predictive (one equal-weight mixture per row).

        ``category`` may be ``None`` (all rows unseen).  ``eps`` can freeze
        the standard-normal draws: one ``(N, q_k)`` array per block.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        n = X.shape[0]
        f = self.fixed_effects(X)
        if category is None:
            cat = np.full((n, len(self.sizes)), -1, dtype=np.int64)
        else:
            cat = _category_matrix(category, n, self.sizes)
        if eps is None:
            if n_draws < 1:
                raise ParameterError("need at least one posterior draw")
            rng = np.random.default_rng() if rng is None else rng
            eps = [rng.standard_normal((n_draws, q)) for q in self.sizes]
        else:
            eps = [np.atleast_2d(np.asarray(e, dtype=np.float64)) for e in eps]
        draws = [p.loc + effective_scales(p) * e for p, e in zip(self.posteriors, eps)]
        keys, group = np.unique(cat, axis=0, return_inverse=True)
        group = group.reshape(-1)
        seen_key = np.any(keys >= 0, axis=1)
        remap = np.full(keys.shape[0], -1, dtype=np.int64)
        remap[seen_key] = np.arange(int(seen_key.sum()))
        group = remap[group]
        keys = keys[seen_key]
        n_d = draws[0].shape[0]
        offsets = np.zeros((keys.shape[0], n_d))
        for k, u in enumerate(draws):
            col = keys[:, k]
            ok = col >= 0
            offsets[ok] += u[:, col[ok]].T
        return MixturePrediction(self.family, self.link, self.dispersion, f, group, offsets)

    def predict_mean(self, X, category=None, n_draws=10_000, rng=None, eps=None):
        return self.predict_distribution(X, category, n_draws, rng, eps).mean()

    def posterior_summary(self, block=0):
        return posterior_summary(self.posteriors[block])

    @property
    def posterior_means(self):
        return self.posteriors[0].loc.copy()

    def random_effect_scale(self, block=0):
        """Estimated between-category sd, ``sqrt(mean(mu_j^2 + sigma_j^2))``."""
        post = self.posteriors[block]
        return float(np.sqrt(np.mean(post.loc ** 2 + effective_scales(post) ** 2)))


def fit_glmmnet(dataset, family="gaussian", link=None, config=None, rng=None, validation=None):
    """Build and train a :class:`GLMMNet`; returns ``(model, report)``."""
    rng = np.random.default_rng() if rng is None else rng
    model = GLMMNet(dataset.n_features, dataset.n_categories, family, link, config, rng)
    report = model.fit(dataset, rng, validation=validation)
    return model, report


def elbo_loss(model, batch, eps, n_total):
    """Negative ELBO of a :class:`Dataset` batch under ``model`` with frozen draws."""
    cat = _category_matrix(batch.category, len(batch), model.sizes, allow_unseen=False)
    Xs = model.standardizer.transform(batch.X)
    return model.loss_and_grad(Xs, cat, batch.y, eps, n_total, grad=False)


def gaussian_marginal_nll_oracle(f, Z, y, sigma_u, sigma_eps):
    """Exact ``-log p(y)`` of the Gaussian random-intercept model with fixed ``f``.

    ``V = sigma_u^2 Z Z' + sigma_eps^2 I``; ``Z`` is an ``(n, q)`` design or a
    vector of category codes.  Raises ``numpy.linalg.LinAlgError`` when ``V``
    is not positive definite.
    """
    f = np.asarray(f, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Z = np.asarray(Z)
    if Z.ndim == 1:
        codes = Z.astype(np.int64)
        Z = np.zeros((codes.size, int(codes.max()) + 1))
        Z[np.arange(codes.size), codes] = 1.0
    Z = Z.astype(np.float64)
    n = y.size
    if Z.shape[0] != n or f.shape != y.shape:
        raise ShapeError("f, Z and y must have matching rows")
    V = sigma_u ** 2 * (Z @ Z.T) + sigma_eps ** 2 * np.eye(n)
    L = np.linalg.cholesky(V)
    r = y - f
    w = np.linalg.solve(L, r)
    return float(0.5 * w @ w + np.sum(np.log(np.diag(L))) + 0.5 * n * _LOG_2PI)
