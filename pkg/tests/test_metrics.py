import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from glmmnet.errors import ShapeError
from glmmnet.metrics import (MetricRecord, mae, medae, nll_score, crps_score, rmse, rmse_avg, score_predictions,
                             wilcoxon_signed_rank)
from glmmnet.predictive import PointPrediction

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestPointMetrics:
    def test_examples(self):
        y = np.array([1.0, 2.0])
        assert rmse(y, y) == mae(y, y) == 0.0
        assert mae([0.0, 0.0], [1.0, -1.0]) == 1.0 and rmse([0.0, 0.0], [1.0, -1.0]) == 1.0
        assert mae([0.0, 0.0], [0.0, 2.0]) == 1.0 and rmse([0.0, 0.0], [0.0, 2.0]) == pytest.approx(math.sqrt(2))
        assert medae([0.0, 0.0, 0.0], [1.0, -5.0, 2.0]) == 2.0

    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=30))
    def test_rmse_dominates_mae(self, pairs):
        p, y = np.array(pairs).T
        assert rmse(p, y) >= mae(p, y) - 1e-9 >= -1e-9

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            rmse([1.0], [1.0, 2.0])
        with pytest.raises(ShapeError):
            mae([], [])


class TestRmseAvg:
    def test_examples(self):
        assert rmse_avg([1.0, 3.0, 5.0], [2.0, 2.0, 5.0], [0, 0, 1]) == 0.0
        assert rmse_avg([1.0, 0.0], [0.0, 1.0], [0, 1]) == 1.0

    def test_only_present_categories(self):
        assert rmse_avg([1.0, 0.0], [0.0, 1.0], [3, 90]) == 1.0

    @given(st.integers(0, 2 ** 31))
    def test_within_category_permutation(self, seed):
        rng = np.random.default_rng(seed)
        cat = rng.integers(0, 4, 20)
        pred, y = rng.normal(size=20), rng.normal(size=20)
        shuffled = pred.copy()
        for j in range(4):
            rows = np.flatnonzero(cat == j)
            shuffled[rows] = pred[rng.permutation(rows)]
        assert rmse_avg(shuffled, y, cat) == pytest.approx(rmse_avg(pred, y, cat), abs=1e-12)

    def test_errors(self):
        with pytest.raises(ShapeError):
            rmse_avg([1.0], [1.0], [0, 1])


class TestProbabilisticScores:
    def test_gaussian_examples(self):
        pred = PointPrediction("gaussian", np.zeros(5), 1.0)
        assert crps_score(pred, np.zeros(5)) == pytest.approx(0.23370, abs=1e-5)
        y = np.linspace(-2, 2, 5)
        assert nll_score(PointPrediction("gaussian", y, 1.0), y) == pytest.approx(0.91894, abs=1e-5)

    def test_point_mass_limit(self):
        pred = PointPrediction("gaussian", np.zeros(3), 1e-14)
        assert crps_score(pred, np.zeros(3)) < 1e-6

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_zero_density_is_flagged(self):
        pred = PointPrediction("gaussian", np.array([0.0, 1.0]), 1e-300)
        y = np.array([1e10, 1.0])
        rec = score_predictions("m", 1, 0, pred.mean(), pred, y, [0, 1])
        assert math.isinf(rec.nll) and rec.status == "nll_infinite" and rec.nll_infinite

    def test_record_fields(self):
        pred = PointPrediction("gaussian", np.zeros(2), 1.0)
        rec = score_predictions("m", 3, 7, pred.mean(), pred, np.array([1.0, -1.0]), [0, 0], 0.5)
        assert isinstance(rec, MetricRecord)
        d = rec.as_dict()
        assert d["experiment"] == "3" and d["seed"] == 7 and d["recovery_corr"] == 0.5 and d["status"] == "ok"
        assert rec.rmse == rec.mae == 1.0


class TestWilcoxon:
    def test_degenerate(self):
        res = wilcoxon_signed_rank([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert res.degenerate and math.isnan(res.p_less) and res.direction == "none"

    def test_six_positive_differences(self):
        res = wilcoxon_signed_rank(np.arange(6) + 1.0, np.zeros(6))
        assert res.method == "exact"
        assert res.p_greater == pytest.approx(1 / 64)
        assert res.p_less == 1.0 and res.direction == "a>b"

    def test_uniformly_smaller_over_fifty(self, rng):
        b = rng.normal(size=50)
        res = wilcoxon_signed_rank(b - np.abs(rng.normal(size=50)) - 0.01, b)
        assert res.method == "normal" and res.p_less < 0.001 and res.direction == "a<b"

    @pytest.mark.parametrize("n", [6, 10, 15])
    def test_exact_matches_scipy(self, rng, n):
        d = rng.normal(0.3, 1.0, n)
        res = wilcoxon_signed_rank(d, np.zeros(n))
        ref = stats.wilcoxon(d, alternative="less", method="exact")
        assert res.p_less == pytest.approx(ref.pvalue, rel=1e-10)
        ref2 = stats.wilcoxon(d, alternative="two-sided", method="exact")
        assert res.p_two_sided == pytest.approx(ref2.pvalue, rel=1e-10)

    def test_normal_matches_scipy_with_ties(self, rng):
        d = np.round(rng.normal(0.2, 1.0, 40), 1)
        d = d[d != 0]
        res = wilcoxon_signed_rank(d, np.zeros(d.size))
        ref = stats.wilcoxon(d, alternative="greater", method="approx", correction=True)
        assert res.p_greater == pytest.approx(ref.pvalue, rel=1e-8)
        assert res.statistic == pytest.approx(stats.rankdata(np.abs(d))[d > 0].sum())

    def test_exact_handles_ties(self):
        a, b = np.array([1.0, 2.0, 2.0, 3.0, 1.0, 4.0, 2.0]), np.zeros(7)
        a[4] = -1.0
        res = wilcoxon_signed_rank(a, b, method="exact")
        # brute-force enumeration over sign patterns with mid-ranks
        ranks = stats.rankdata(np.abs(a))
        w = ranks[a > 0].sum()
        signs = np.array(np.meshgrid(*[[0, 1]] * 7)).reshape(7, -1).T
        sums = signs @ ranks
        assert res.p_less == pytest.approx(np.mean(sums <= w + 1e-9))

    def test_exact_close_to_normal_at_fifteen(self, rng):
        for _ in range(20):
            d = rng.normal(0.3, 1.0, 15)
            ex = wilcoxon_signed_rank(d, np.zeros(15), method="exact")
            ap = wilcoxon_signed_rank(d, np.zeros(15), method="normal")
            assert abs(ex.p_less - ap.p_less) < 0.02

    def test_errors(self):
        with pytest.raises(ShapeError):
            wilcoxon_signed_rank([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            wilcoxon_signed_rank([1.0], [2.0], method="bogus")
