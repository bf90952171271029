"""Cross-validated GLMM encoding of a high-cardinality feature.

The rows are split into ``K`` folds.  For fold ``k`` a random-intercept model
is fitted on the other folds; a row in fold ``k`` is encoded as
``g^{-1}(beta0 + u_j)`` when its category occurs in the other folds and as
``g^{-1}(beta0)`` otherwise.  A fit on all rows encodes new data.
"""

import csv
from dataclasses import dataclass

import numpy as np

from ..ed_family import get_family
from ..errors import ParameterError
from .random_intercept import fit_random_intercept


@dataclass
class EncoderModel:
    fold_fits: list
    fold_of_row: np.ndarray
    fold_train_rows: list
    encoding: np.ndarray
    full_fit: object
    n_folds: int

    @property
    def fallback(self):
        """``g^{-1}(beta0)`` of the full-data fit."""
        return self.full_fit.fallback()

    def transform(self, category):
        """Encode new rows with the full-data fit (unseen codes get the fallback)."""
        return self.full_fit.predict(np.asarray(category, dtype=np.int64).reshape(-1))

    def leakage_free(self):
        """True when no row was encoded by a fold model trained on it."""
        for k, rows in enumerate(self.fold_train_rows):
            own = np.flatnonzero(self.fold_of_row == k)
            if np.intersect1d(own, rows).size:
                return False
        return bool(np.all((self.fold_of_row >= 0) & (self.fold_of_row < self.n_folds)))


def make_folds(n, n_folds, rng):
    """Random fold label per row with near-equal fold sizes."""
    if n_folds < 2:
        raise ParameterError("need at least two folds")
    if n_folds > n:
        raise ParameterError(f"{n_folds} folds need at least {n_folds} rows, got {n}")
    labels = np.empty(n, dtype=np.int64)
    for k, part in enumerate(np.array_split(rng.permutation(n), n_folds)):
        labels[part] = k
    return labels


def glmm_encode(dataset, n_folds=5, family="gaussian", link=None, rng=None, config=None):
    """Run the K-fold GLMM encoder on ``dataset``; returns an :class:`EncoderModel`."""
    family = get_family(family)
    rng = np.random.default_rng() if rng is None else rng
    y = dataset.y
    cat = dataset.category.reshape(len(dataset), -1)[:, 0]
    q = dataset.n_categories if np.ndim(dataset.n_categories) == 0 else dataset.n_categories[0]
    folds = make_folds(len(dataset), n_folds, rng)
    encoding = np.empty(len(dataset))
    fits, train_sets = [], []
    for k in range(n_folds):
        train = np.flatnonzero(folds != k)
        held = np.flatnonzero(folds == k)
        fit = fit_random_intercept(y[train], cat[train], q, family, link, config, rng)
        encoding[held] = fit.predict(cat[held])
        fits.append(fit)
        train_sets.append(train)
    full = fit_random_intercept(y, cat, q, family, link, config, rng)
    return EncoderModel(fits, folds, train_sets, encoding, full, n_folds)


def write_encoded_csv(dataset, encoding, path, feature_names=None):
    """Write the dataset with an extra ``z_encoded`` column."""
    names = feature_names or [f"x{i + 1}" for i in range(dataset.n_features)]
    cats = dataset.category.reshape(len(dataset), -1)[:, 0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["category", "y", "z_encoded"])
        for i in range(len(dataset)):
            writer.writerow([repr(float(v)) for v in dataset.X[i]]
                            + [int(cats[i]), repr(float(dataset.y[i])), repr(float(encoding[i]))])
