"""Dataset container and feature standardisation."""

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class Dataset:
    """Standard features ``X``, integer category codes and the response.

    ``category`` is ``(n,)`` for one high-cardinality feature or ``(n, K)``
    for several; ``n_categories`` is an int or a K-tuple accordingly.  Code
    ``-1`` marks a category that was never seen in training.
    """

    X: np.ndarray
    category: np.ndarray
    y: np.ndarray
    n_categories: object

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.category = np.asarray(self.category, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.float64)
        n = self.y.shape[0]
        if self.X.shape[0] != n or self.category.shape[0] != n:
            raise ShapeError("X, category and y must have the same number of rows")

    def __len__(self):
        return self.y.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def subset(self, rows):
        return Dataset(self.X[rows], self.category[rows], self.y[rows], self.n_categories)

    def checksum(self):
        h = hashlib.sha256()
        for arr in (self.X, self.category, self.y):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def to_csv(self, path, extra=None):
        """Write ``x1..xp, category, y`` (plus optional named columns)."""
        extra = extra or {}
        cols = [f"x{i + 1}" for i in range(self.n_features)]
        cats = self.category if self.category.ndim == 1 else self.category[:, 0]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols + ["category", "y"] + list(extra))
            for i in range(len(self)):
                row = [repr(float(v)) for v in self.X[i]] + [int(cats[i]), repr(float(self.y[i]))]
                row += [repr(float(extra[k][i])) for k in extra]
                writer.writerow(row)


def read_csv_dataset(path, n_categories=None):
    """Read a file written by :meth:`Dataset.to_csv`.

    Every column except ``category`` and ``y`` is a standard feature.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    if "category" not in header or "y" not in header:
        raise ShapeError("CSV needs 'category' and 'y' columns")
    ic, iy = header.index("category"), header.index("y")
    feat = [i for i, name in enumerate(header) if i not in (ic, iy)]
    data = np.array(rows, dtype=object)
    X = data[:, feat].astype(np.float64) if feat else np.zeros((len(rows), 0))
    cat = data[:, ic].astype(np.int64)
    y = data[:, iy].astype(np.float64)
    q = int(cat.max()) + 1 if n_categories is None else n_categories
    return Dataset(X, cat, y, q), [header[i] for i in feat]


class Standardizer:
    """Column-wise centring and scaling fitted on training data."""

    def __init__(self, mean, scale):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] == 0:
            return cls(np.zeros(0), np.ones(0))
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale < 1e-12] = 1.0
        return cls(mean, scale)

    @classmethod
    def identity(cls, width):
        return cls(np.zeros(width), np.ones(width))

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale
