import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from geoconformal.metrics import (
    TrialReport,
    UndefinedCorrelationError,
    aggregate_trials,
    conditional_coverage_stats,
    equal_frequency_bins,
    marginal_coverage,
    pearson_correlation,
    recommend_method,
    wilcoxon_signed_rank,
)


class TestCoverage:
    def test_examples(self):
        assert marginal_coverage([True] * 4) == 1.0
        assert marginal_coverage([True, True, False, False]) == 0.5
        with pytest.raises(ValueError):
            marginal_coverage([])


class TestBins:
    def test_even(self, rng):
        v = rng.permutation(12).astype(float)
        b = equal_frequency_bins(v, 6)
        assert np.array_equal(b[np.argsort(v)], np.repeat(np.arange(6), 2))

    def test_thirteen(self):
        b = equal_frequency_bins(np.arange(13.0), 6)
        assert np.bincount(b).tolist() == [2, 2, 2, 2, 2, 3]
        assert b[-1] == 5 and b[-3] == 5

    def test_ties_by_index(self):
        b = equal_frequency_bins(np.zeros(12), 6)
        assert b.tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]

    def test_too_few(self):
        with pytest.raises(ValueError):
            equal_frequency_bins(np.arange(5.0), 6)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=6, max_size=300), st.integers(1, 6))
    def test_partition_property(self, values, n_bins):
        b = equal_frequency_bins(values, n_bins)
        counts = np.bincount(b, minlength=n_bins)
        assert counts.sum() == len(values) and counts.max() - counts.min() <= 1
        v = np.asarray(values)
        for lo in range(n_bins - 1):
            assert v[b == lo].max() <= v[b == lo + 1].min()


class TestConditional:
    def test_uniform(self):
        bins = np.repeat(np.arange(6), 10)
        hits = np.tile([1] * 9 + [0], 6)
        cov, sd, worst = conditional_coverage_stats(bins, hits)
        assert np.allclose(cov, 0.9) and sd == pytest.approx(0.0, abs=1e-15) and worst == pytest.approx(0.9)

    def test_hand_example(self):
        bins = np.repeat(np.arange(6), 5)
        hits = np.concatenate([[1] * 5, [1, 1, 1, 1, 0]] * 3)
        cov, sd, worst = conditional_coverage_stats(bins, hits)
        assert cov.tolist() == pytest.approx([1.0, 0.8] * 3)
        assert sd == pytest.approx(0.1) and worst == pytest.approx(0.8)

    def test_empty_bin(self):
        with pytest.raises(ValueError):
            conditional_coverage_stats(np.array([0, 0, 1]), np.ones(3), 3)

    def test_worst_below_marginal(self, rng):
        hits = rng.random(600) < 0.8
        bins = equal_frequency_bins(rng.random(600), 6)
        cov, _, worst = conditional_coverage_stats(bins, hits)
        assert worst <= hits.mean() <= cov.max()


class TestPearson:
    def test_examples(self, rng):
        a = rng.normal(size=50)
        assert pearson_correlation(a, a) == pytest.approx(1.0)
        assert pearson_correlation(a, -a) == pytest.approx(-1.0)

    def test_matches_scipy_and_affine(self, rng):
        a, b = rng.normal(size=200), rng.normal(size=200)
        b = b + 0.5 * a
        r = pearson_correlation(a, b)
        assert r == pytest.approx(stats.pearsonr(a, b).statistic, abs=1e-12)
        assert pearson_correlation(3.0 * a + 7.0, 0.01 * b - 2.0) == pytest.approx(r, abs=1e-12)

    def test_constant(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson_correlation([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


class TestWilcoxon:
    def test_exact_five_positive(self):
        res = wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0, 5.0])
        assert res.method == "exact" and res.pvalue == pytest.approx(1 / 16)
        assert res.statistic == 0.0

    def test_symmetric(self):
        assert wilcoxon_signed_rank([-1, 1, -2, 2, -3, 3]).pvalue == pytest.approx(1.0)

    def test_constant_twenty(self):
        res = wilcoxon_signed_rank(np.full(20, 0.3))
        assert res.method == "normal" and res.pvalue < 1e-4

    def test_all_zero(self):
        assert wilcoxon_signed_rank(np.zeros(10)).pvalue == 1.0

    def test_too_short(self):
        with pytest.raises(ValueError):
            wilcoxon_signed_rank([1.0, -2.0, 0.0, 3.0])

    @pytest.mark.parametrize("n", [5, 8, 12])
    def test_exact_matches_scipy(self, n, rng):
        for _ in range(5):
            d = rng.normal(0.3, 1.0, n)
            ours = wilcoxon_signed_rank(d).pvalue
            ref = stats.wilcoxon(d, method="exact").pvalue
            assert ours == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("n", [13, 40, 100])
    def test_normal_matches_scipy(self, n, rng):
        for _ in range(5):
            d = np.round(rng.normal(0.2, 1.0, 3 * n), 1)  # rounding creates ties
            d = d[d != 0][:n]
            ours = wilcoxon_signed_rank(d).pvalue
            ref = stats.wilcoxon(d, method="approx", correction=True).pvalue
            assert ours == pytest.approx(ref, rel=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-100, 100).filter(lambda x: abs(x) > 1e-6), min_size=5, max_size=40))
    def test_sign_flip_symmetry(self, diffs):
        d = np.asarray(diffs)
        assert wilcoxon_signed_rank(d).pvalue == pytest.approx(wilcoxon_signed_rank(-d).pvalue, abs=1e-15)


def _report(method, trial, cstd, worst=0.8, cov=0.9, r=0.5):
    return TrialReport(
        method=method,
        trial=trial,
        seed=trial,
        marginal_coverage=cov,
        mean_area=1.0,
        bin_coverages=(0.9,) * 6,
        cond_std=cstd,
        worst_bin=worst,
        diagnostic_r=r,
    )


class TestAggregate:
    def test_single_trial(self):
        s = aggregate_trials([_report("adaptive", 0, 0.04), _report("standard", 0, 0.05)])
        a = s["methods"]["adaptive"]
        assert a["marginal_coverage_mean"] == 0.9 and a["marginal_coverage_std"] == 0.0
        assert a["cond_std"] == 0.04 and a["worst_bin"] == 0.8

    def test_identical_trials(self):
        s = aggregate_trials([_report("standard", t, 0.05) for t in range(3)])
        assert s["methods"]["standard"]["marginal_coverage_std"] == 0.0

    def test_std_and_se(self):
        reps = [_report("adaptive", t, 0.04, cov=c) for t, c in enumerate([0.88, 0.90, 0.92])]
        m = aggregate_trials(reps)["methods"]["adaptive"]
        assert m["marginal_coverage_std"] == pytest.approx(0.02)
        assert m["marginal_coverage_se"] == pytest.approx(0.02 / math.sqrt(3))

    def test_wilcoxon_pairs(self):
        reps = [_report("adaptive", t, 0.03 + 0.001 * t) for t in range(30)]
        reps += [_report("standard", t, 0.10 + 0.002 * t) for t in range(30)]
        s = aggregate_trials(reps)
        assert s["wilcoxon_adaptive_vs_standard"]["cond_std"]["pvalue"] < 1e-5
        assert s["wilcoxon_adaptive_vs_standard"]["worst_bin"]["pvalue"] == 1.0

    def test_mismatched_counts(self):
        with pytest.raises(ValueError):
            aggregate_trials([_report("adaptive", 0, 0.1), _report("adaptive", 1, 0.1), _report("standard", 0, 0.1)])

    def test_recommendation(self):
        assert recommend_method(0.5) == "adaptive"
        assert recommend_method(0.15) == "adaptive"
        assert recommend_method(0.1) == "standard"
        assert recommend_method(float("nan")) == "standard"
        reps = [_report("adaptive", 0, 0.04, r=0.05), _report("standard", 0, 0.05, r=0.05)]
        assert aggregate_trials(reps)["recommendation"] == "standard"
        assert aggregate_trials(reps, threshold=0.01)["recommendation"] == "adaptive"

    def test_row_expansion(self):
        row = _report("naive", 2, 0.1).as_row()
        assert [k for k in row if k.startswith("bin_")] == [f"bin_{i}" for i in range(1, 7)]
        assert "bin_coverages" not in row
