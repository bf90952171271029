"""Feed-forward network with a learned entity embedding of the category.

Each category index selects a row of a ``(q + 1, d)`` embedding matrix.
That row is concatenated with the standardised features and passed to a
ReLU network.  The network is trained on squared error against ``g(y)``,
which is ``y`` itself for the identity link.  Row ``q`` is reserved for
unseen categories.  After training it is set to the mean of the learned
rows.
"""

import math

import numpy as np

from .. import _kernels
from ..data import Standardizer
from ..diff_core import Adam, FixedEffectsNet
from ..ed_family import get_family, get_link
from ..errors import ParameterError, ShapeError, TrainingError
from ..model import FitReport, TrainingConfig
from ..predictive import PointPrediction
from .dispersion import estimate_dispersion

EMBEDDING_INIT = 0.05


def default_embedding_dim(q):
    """Fourth-root rule ``ceil(q ** 0.25)``; exact for perfect fourth powers."""
    d = math.ceil(q ** 0.25 - 1e-12)
    return max(1, int(d))


class EntityEmbeddedNet:
    def __init__(self, n_features, n_categories, dim=None, family="gaussian", link=None, config=None, rng=None):
        self.family = get_family(family)
        self.link = get_link(self.family.default_link if link is None else link)
        self.config = TrainingConfig() if config is None else config
        self.q = int(n_categories)
        self.dim = default_embedding_dim(self.q) if dim is None else int(dim)
        if self.dim < 1:
            raise ParameterError("embedding dimension must be at least 1")
        rng = np.random.default_rng() if rng is None else rng
        self.embedding = rng.uniform(-EMBEDDING_INIT, EMBEDDING_INIT, size=(self.q + 1, self.dim))
        self.n_features = int(n_features)
        self.net = FixedEffectsNet.build(self.n_features + self.dim, self.config.hidden, rng)
        self.standardizer = Standardizer.identity(self.n_features)
        self.dispersion = 1.0
        self.report = None

    @property
    def unknown_index(self):
        return self.q

    def parameters(self):
        return list(self.net.parameters()) + [self.embedding]

    def _codes(self, category, n):
        cat = np.asarray(category, dtype=np.int64).reshape(-1)
        if cat.size != n:
            raise ShapeError("one category code per row is required")
        if np.any(cat >= self.q):
            raise IndexError(f"category index >= {self.q}")
        return np.where(cat < 0, self.q, cat)

    def _inputs(self, Xs, codes):
        return np.hstack([Xs, self.embedding[codes]])

    def loss_and_grad(self, Xs, codes, target, grad=True):
        """Mean squared error on the ``g(y)`` scale and its gradients."""
        out = self.net.forward(self._inputs(Xs, codes), record=grad)
        r = out - target
        loss = float(np.mean(r * r))
        if not grad:
            return loss
        dX = self.net.backward(2.0 * r / r.size)
        d_emb = _kernels.segment_sum(dX[:, self.n_features:], codes, self.q + 1)
        return loss, [g.copy() for g in self.net.gradients()] + [d_emb]

    def embedding_distance(self, a, b):
        return float(np.linalg.norm(self.embedding[a] - self.embedding[b]))

    def fit(self, dataset, rng=None):
        cfg = self.config
        rng = np.random.default_rng() if rng is None else rng
        y = self.family.check_support(dataset.y)
        codes = self._codes(dataset.category.reshape(len(dataset), -1)[:, 0], len(dataset))
        if np.any(codes == self.q):
            raise IndexError("training rows need known categories")
        target = self.link.link(y)
        n_val = int(round(cfg.validation_fraction * len(dataset)))
        if len(dataset) - n_val < 1:
            n_val = 0
        perm = rng.permutation(len(dataset))
        va, tr = np.sort(perm[:n_val]), np.sort(perm[n_val:])
        self.standardizer = Standardizer.fit(dataset.X[tr]) if cfg.standardize else \
            Standardizer.identity(self.n_features)
        Xs = self.standardizer.transform(dataset.X)
        self.net.layers[-1].biases[:] = float(np.mean(target[tr]))
        params = self.parameters()
        decay = self.net.weight_mask() + [False]
        opt = Adam(params, lr=cfg.learning_rate, weight_decay=[cfg.weight_decay if m else 0.0 for m in decay])
        report = FitReport()
        best, stale = math.inf, 0
        best_params = [p.copy() for p in params]
        for epoch in range(1, cfg.max_epochs + 1):
            order = tr[rng.permutation(tr.size)]
            total = 0.0
            for start in range(0, order.size, cfg.batch_size):
                rows = order[start:start + cfg.batch_size]
                loss, grads = self.loss_and_grad(Xs[rows], codes[rows], target[rows])
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite training loss in epoch {epoch}", epoch)
                opt.step(params, grads)
                total += loss * rows.size
            rows_val = va if va.size else tr
            val = self.loss_and_grad(Xs[rows_val], codes[rows_val], target[rows_val], grad=False)
            report.training_trace.append(total / tr.size)
            report.validation_trace.append(val)
            report.epochs_run = epoch
            if val < best:
                best, stale, report.best_epoch = val, 0, epoch
                best_params = [p.copy() for p in params]
            else:
                stale += 1
                if stale >= cfg.patience:
                    report.stopped_early = True
                    break
        for p, b in zip(params, best_params):
            p[...] = b
        self.embedding[self.q] = self.embedding[:self.q].mean(axis=0)
        report.train_elbo = float("nan")
        self.report = report
        self.dispersion = estimate_dispersion(self.predict(dataset.X, dataset.category), y, self.family)
        return report

    def predict(self, X, category):
        X = np.asarray(X, dtype=np.float64)
        codes = self._codes(np.asarray(category).reshape(X.shape[0], -1)[:, 0], X.shape[0])
        out = self.net.forward(self._inputs(self.standardizer.transform(X), codes), record=False)
        return self.family.clip_mean(self.link.inverse(out))

    def predict_distribution(self, X, category):
        return PointPrediction(self.family, self.predict(X, category), self.dispersion)


def fit_nn_ee(dataset, dim=None, config=None, family="gaussian", link=None, rng=None):
    rng = np.random.default_rng() if rng is None else rng
    q = dataset.n_categories if np.ndim(dataset.n_categories) == 0 else dataset.n_categories[0]
    model = EntityEmbeddedNet(dataset.n_features, q, dim, family, link, config, rng)
    model.fit(dataset, rng)
    return model
