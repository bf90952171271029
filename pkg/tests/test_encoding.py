import csv

import numpy as np
import pytest

from glmmnet.baselines import glmm_encode, make_folds, write_encoded_csv
from glmmnet.data import Dataset
from glmmnet.errors import ParameterError
from glmmnet.model import TrainingConfig


def _data(rng, n=500, q=20):
    X = rng.uniform(size=(n, 2))
    cat = rng.integers(0, q, n)
    y = 2.0 + rng.normal(0, 0.7, q)[cat] + rng.normal(0, 0.5, n)
    return Dataset(X, cat, y, q)


def test_make_folds(rng):
    labels = make_folds(23, 5, rng)
    counts = np.bincount(labels)
    assert counts.size == 5 and counts.max() - counts.min() <= 1
    with pytest.raises(ParameterError):
        make_folds(3, 5, rng)
    with pytest.raises(ParameterError):
        make_folds(10, 1, rng)


def test_no_leakage(rng):
    enc = glmm_encode(_data(rng), 5, rng=rng)
    assert enc.leakage_free()
    for k, rows in enumerate(enc.fold_train_rows):
        np.testing.assert_array_equal(rows, np.flatnonzero(enc.fold_of_row != k))


def test_leakage_detected(rng):
    enc = glmm_encode(_data(rng, n=100), 5, rng=rng)
    enc.fold_train_rows[0] = np.arange(100)
    assert not enc.leakage_free()


def test_unseen_category_in_fold_gets_fallback_exactly(rng):
    data = _data(rng)
    data.category[7] = 20
    data.n_categories = 21
    enc = glmm_encode(data, 5, rng=rng)
    k = enc.fold_of_row[7]
    fit = enc.fold_fits[k]
    assert enc.encoding[7] == fit.fallback() == fit.link.inverse(np.array([fit.beta0]))[0]
    assert enc.transform([20])[0] == pytest.approx(enc.transform([20])[0])


def test_seen_rows_use_fold_prediction(rng):
    data = _data(rng)
    enc = glmm_encode(data, 5, rng=rng)
    i = 11
    fit = enc.fold_fits[enc.fold_of_row[i]]
    assert enc.encoding[i] == fit.beta0 + fit.u[data.category[i]]


def test_single_category_encodes_fold_mean(rng):
    n = 2000
    y = rng.normal(3.0, 1.0, n)
    data = Dataset(np.zeros((n, 1)), np.zeros(n, int), y, 1)
    enc = glmm_encode(data, 5, rng=rng)
    for k in range(5):
        rows = np.flatnonzero(enc.fold_of_row == k)
        assert enc.encoding[rows[0]] == pytest.approx(y[enc.fold_train_rows[k]].mean(), abs=1e-3)


def test_shrinkage_ordering(rng):
    q = 30
    n_other = 1500
    cat = np.concatenate([np.zeros(2, int), np.ones(200, int), rng.integers(2, q, n_other)])
    y = np.concatenate([np.full(2, 4.0), np.full(200, 4.0), 2.0 + rng.normal(0, 0.5, q)[rng.integers(2, q, n_other)]
                        + rng.normal(0, 0.5, n_other)])
    enc = glmm_encode(Dataset(np.zeros((cat.size, 1)), cat, y, q), 5, rng=rng)
    small, large = enc.transform([0, 1])
    assert abs(small - enc.fallback) < abs(large - enc.fallback)


def test_poisson_encoder_fallback_on_mean_scale(rng):
    n, q = 300, 5
    cat = rng.integers(0, q, n)
    y = rng.poisson(np.exp(0.5 + rng.normal(0, 0.4, q)[cat])).astype(float)
    enc = glmm_encode(Dataset(np.zeros((n, 0)), cat, y, q), 3, "poisson", rng=rng,
                      config=TrainingConfig(max_epochs=30))
    assert enc.fallback == pytest.approx(np.exp(enc.full_fit.beta0))
    assert np.all(enc.encoding > 0)


def test_csv_export(rng, tmp_path):
    data = _data(rng, n=30)
    enc = glmm_encode(data, 3, rng=rng)
    path = tmp_path / "enc.csv"
    write_encoded_csv(data, enc.encoding, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2", "category", "y", "z_encoded"]
    assert len(rows) == 31
    assert float(rows[5][-1]) == enc.encoding[4]
