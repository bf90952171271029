"""Point and probabilistic forecast scores, and the paired signed-rank test."""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import _kernels
from .errors import ShapeError

EXACT_MAX_N = 15


def _pair(pred, y):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if pred.shape != y.shape:
        raise ShapeError(f"length mismatch: {pred.size} predictions for {y.size} observations")
    if pred.size == 0:
        raise ShapeError("no observations")
    return pred, y


def rmse(pred, y):
    pred, y = _pair(pred, y)
    return float(np.sqrt(np.mean((y - pred) ** 2)))


def mae(pred, y):
    pred, y = _pair(pred, y)
    return float(np.mean(np.abs(y - pred)))


def medae(pred, y):
    pred, y = _pair(pred, y)
    return float(np.median(np.abs(y - pred)))


def rmse_avg(pred, y, category):
    """RMSE between per-category mean responses and mean predictions.

    Only categories present in ``category`` contribute.
    """
    pred, y = _pair(pred, y)
    cat = np.asarray(category, dtype=np.int64).reshape(-1)
    if cat.shape != y.shape:
        raise ShapeError("one category per observation is required")
    levels, inv = np.unique(cat, return_inverse=True)
    if levels.size == 0:
        raise ShapeError("no categories")
    counts = np.bincount(inv)
    ybar = np.bincount(inv, weights=y) / counts
    pbar = np.bincount(inv, weights=pred) / counts
    return float(np.sqrt(np.mean((ybar - pbar) ** 2)))


def crps_score(prediction, y):
    """Mean CRPS of a prediction object (anything exposing ``crps(y)``)."""
    return float(np.mean(prediction.crps(np.asarray(y, dtype=np.float64))))


def nll_score(prediction, y):
    """Mean negative log predictive density; ``inf`` when some density is 0."""
    with np.errstate(divide="ignore"):
        lp = prediction.log_density(np.asarray(y, dtype=np.float64))
    if np.any(np.isneginf(lp)) or np.any(np.isnan(lp)):
        return math.inf
    return float(-np.mean(lp))


METRIC_NAMES = ("rmse", "mae", "rmse_avg", "crps", "nll")


@dataclass
class MetricRecord:
    model: str
    experiment: str
    seed: int
    rmse: float
    mae: float
    rmse_avg: float
    crps: float
    nll: float
    medae: float = float("nan")
    recovery_corr: float = float("nan")
    status: str = "ok"

    @property
    def nll_infinite(self):
        return math.isinf(self.nll)

    def as_dict(self):
        return asdict(self)


def score_predictions(model_name, experiment, seed, mean, prediction, y, category, recovery_corr=float("nan")):
    rec = MetricRecord(model_name, str(experiment), int(seed), rmse(mean, y), mae(mean, y),
                       rmse_avg(mean, y, category), crps_score(prediction, y), nll_score(prediction, y),
                       medae(mean, y), recovery_corr)
    if rec.nll_infinite:
        rec.status = "nll_infinite"
    return rec


@dataclass(frozen=True)
class WilcoxonResult:
    """Signed-rank comparison of paired scores ``a`` and ``b``.

    ``p_less`` tests the alternative that ``a`` tends to be smaller than
    ``b``; ``p_greater`` the reverse.  ``direction`` is ``"a<b"``, ``"a>b"``
    or ``"none"`` according to the sign of the rank sum.
    """

    statistic: float
    p_two_sided: float
    p_less: float
    p_greater: float
    direction: str
    n: int
    method: str
    degenerate: bool = False


def _rank_abs(d):
    return stats.rankdata(np.abs(d))


def wilcoxon_signed_rank(a, b, method="auto"):
    """Paired Wilcoxon signed-rank test on ``d = a - b``.

    Zero differences are dropped and tied magnitudes get mid-ranks.  With
    ``n <= 15`` non-zero pairs the null distribution is enumerated exactly
    (over the doubled mid-ranks, so ties are handled exactly too);
    otherwise a normal approximation with continuity and tie corrections is
    used.  ``statistic`` is ``W+``, the rank sum of positive differences.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError("paired samples must have equal length")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        nan = float("nan")
        return WilcoxonResult(nan, nan, nan, nan, "none", 0, "degenerate", True)
    ranks = _rank_abs(d)
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2.0
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "normal"
    if method == "exact":
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        counts = _kernels.signed_rank_null(doubled)
        probs = counts / counts.sum()
        w2 = int(round(2.0 * w_plus))
        p_le = float(probs[:w2 + 1].sum())
        p_ge = float(probs[w2:].sum())
    elif method == "normal":
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
        sd = math.sqrt(var)
        mean = total / 2.0
        p_le = float(stats.norm.cdf((w_plus - mean + 0.5) / sd))
        p_ge = float(stats.norm.sf((w_plus - mean - 0.5) / sd))
    else:
        raise ValueError(f"unknown method {method!r}")
    p_le, p_ge = min(p_le, 1.0), min(p_ge, 1.0)
    p_two = min(1.0, 2.0 * min(p_le, p_ge))
    centre = total / 2.0
    direction = "a<b" if w_plus < centre else ("a>b" if w_plus > centre else "none")
    return WilcoxonResult(w_plus, p_two, p_le, p_ge, direction, n, method)
