import datetime as dt

import numpy as np
import pytest
import scipy.stats as st

from countcure.errors import InsufficientDataError
from countcure.model import IncrementSeries, Level, Metric, SeriesKey, SourceId
from countcure.seasonality import (
    ensemble_seasonal,
    friedman_test,
    kruskal_wallis_test,
    qs_test,
    remove_weekly_cycle,
    weekly_max_profile,
    welch_anova_test,
)

SUNDAY = dt.date(2020, 3, 15)  # a Sunday
KEY = SeriesKey(Level.STATE, state_name="Iowa")


def incr(values, start=SUNDAY, key=KEY):
    return IncrementSeries(key, Metric.INFECTION, SourceId.NYT, start,
                           np.asarray(values, dtype=float))


class TestFriedman:
    def test_constant_series(self):
        stat, df, p = friedman_test(np.full(35, 4.0))
        assert stat == 0.0 and p == 1.0

    def test_permuted_weekday_effect(self):
        # 4 weeks of [7,1,2,3,4,5,6]: rank sums 28,4,8,12,16,20,24 -> stat 24
        z = np.tile([7.0, 1, 2, 3, 4, 5, 6], 4)
        stat, df, p = friedman_test(z)
        assert stat == pytest.approx(24.0, abs=1e-12)
        assert df == 6
        assert p < 0.01

    def test_matches_scipy_with_ties(self):
        rng = np.random.default_rng(5)
        z = rng.integers(0, 4, size=70).astype(float)
        blocks = z.reshape(-1, 7)
        stat, _, p = friedman_test(z)
        s_stat, s_p = st.friedmanchisquare(*blocks.T)
        assert stat == pytest.approx(s_stat, abs=1e-10)
        assert p == pytest.approx(s_p, abs=1e-10)

    def test_insufficient_weeks(self):
        with pytest.raises(InsufficientDataError):
            friedman_test(np.arange(14.0))

    def test_rank_invariance_under_monotone_transform(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=63)
        a = friedman_test(z)[0]
        b = friedman_test(z ** 3 + 1)[0]
        assert a == pytest.approx(b, abs=1e-12)

    def test_calendar_anchor_from_series(self):
        # starting Wednesday: leading partial week dropped
        z = np.tile([9.0, 1, 2, 3, 4, 5, 6], 5)
        wednesday = dt.date(2020, 3, 18)
        stat_anchored, _, _ = friedman_test(incr(z, start=wednesday))
        stat_manual, _, _ = friedman_test(z, anchor_weekday=3)
        assert stat_anchored == stat_manual


class TestKruskalWallis:
    def test_constant_series(self):
        stat, df, p = kruskal_wallis_test(np.full(30, 2.0))
        assert stat == 0.0 and p == 1.0

    def test_separated_groups(self):
        rng = np.random.default_rng(1)
        z = np.tile(np.arange(7.0) * 100, 10) + rng.normal(scale=0.01, size=70)
        _, _, p = kruskal_wallis_test(z)
        assert p < 1e-4

    def test_matches_independent_implementation(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            z = rng.normal(size=rng.integers(30, 90))
            groups = [z[i::7] for i in range(7)]
            stat, _, p = kruskal_wallis_test(z)
            s_stat, s_p = st.kruskal(*groups)
            assert stat == pytest.approx(s_stat, abs=1e-8)

    def test_empty_group(self):
        with pytest.raises(InsufficientDataError):
            kruskal_wallis_test(np.arange(8.0))

    def test_rank_invariance(self):
        rng = np.random.default_rng(3)
        z = rng.normal(size=50)
        assert kruskal_wallis_test(z)[0] == pytest.approx(
            kruskal_wallis_test(z ** 3 + 1)[0], abs=1e-12)


class TestWelch:
    def test_all_identical(self):
        stat, df1, df2, p, degenerate = welch_anova_test(np.full(28, 3.0))
        assert p == 1.0 and degenerate

    def test_zero_variance_distinct_means(self):
        z = np.tile([0.0, 100, 1, 1, 1, 1, 1], 4)
        stat, _, _, p, degenerate = welch_anova_test(z)
        assert p == 0.0 and degenerate

    def test_strong_separation(self):
        rng = np.random.default_rng(11)
        z = np.tile([0.0, 100, 0, 0, 0, 0, 0], 10) + rng.normal(scale=1.0, size=70)
        _, _, _, p, degenerate = welch_anova_test(z)
        assert not degenerate
        assert p < 1e-6

    def test_textbook_formula(self):
        # independent hand computation of the Welch statistic on two groups x 7
        rng = np.random.default_rng(4)
        z = rng.normal(size=70)
        groups = [z[i::7] for i in range(7)]
        means = np.array([g.mean() for g in groups])
        var = np.array([g.var(ddof=1) for g in groups])
        n = np.array([len(g) for g in groups], dtype=float)
        w = n / var
        grand = (w * means).sum() / w.sum()
        k = 7
        a = (w * (means - grand) ** 2).sum() / (k - 1)
        tail = ((1 - w / w.sum()) ** 2 / (n - 1)).sum()
        b = 1 + 2 * (k - 2) / (k ** 2 - 1) * tail
        stat, df1, df2, p, _ = welch_anova_test(z)
        assert stat == pytest.approx(a / b, rel=1e-12)
        assert df2 == pytest.approx((k ** 2 - 1) / (3 * tail), rel=1e-12)


class TestQS:
    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            qs_test(np.random.default_rng(0).normal(size=20))

    def test_pure_sawtooth(self):
        z = np.tile(np.arange(7.0), 20)
        stat, df, p = qs_test(z)
        assert df == 2
        assert p < 1e-6

    def test_negative_seasonal_acf_truncated(self):
        # period-14 alternating sign pattern: lag-7 ACF of the differenced
        # series is strongly negative, lag-14 positive pairs cancel by design
        z = np.concatenate([np.tile(np.r_[np.zeros(7), np.full(7, 5.0)], 10)])
        w = np.diff(z)
        centered = w - w.mean()
        rho7 = centered[7:] @ centered[:-7] / (centered @ centered)
        assert rho7 < 0  # fixture is genuinely negative at the seasonal lag
        z_half = z[:77]  # odd number of half-periods keeps lag-14 negative too
        w = np.diff(z_half)
        centered = w - w.mean()
        rho14 = centered[14:] @ centered[:-14] / (centered @ centered)
        if rho14 < 0:
            stat, _, p = qs_test(z_half)
            assert stat == 0.0 and p == 1.0

    def test_affine_invariance(self):
        rng = np.random.default_rng(6)
        z = rng.normal(size=60)
        assert qs_test(z)[0] == pytest.approx(qs_test(3.5 * z + 11)[0], abs=1e-10)

    def test_constant_degenerate(self):
        stat, _, p = qs_test(np.full(40, 7.0))
        assert stat == 0.0 and p == 1.0


class TestEnsemble:
    def test_strong_cycle_all_significant(self):
        rng = np.random.default_rng(8)
        z = np.tile([5.0, 80, 10, 12, 9, 40, 60], 12) + rng.normal(scale=1.0, size=84)
        report = ensemble_seasonal(z)
        assert all(r.significant for r in report.results.values())
        assert report.ensemble_verdict

    def test_constant_series_not_seasonal(self):
        report = ensemble_seasonal(np.full(63, 9.0))
        assert not report.ensemble_verdict
        assert all(r.p_value == 1.0 for r in report.results.values())

    def test_two_of_four_is_not_majority(self):
        from countcure.seasonality import SeasonalityReport, TestResult
        # the tie rule itself: patch a report's votes through the public path
        # by checking the verdict formula on a constructed vote split
        results = {
            "QS": TestResult("QS", 9.0, (2.0,), 0.01, True),
            "Friedman": TestResult("Friedman", 9.0, (6.0,), 0.01, True),
            "KruskalWallis": TestResult("KruskalWallis", 1.0, (6.0,), 0.9, False),
            "Welch": TestResult("Welch", 1.0, (6.0, 30.0), 0.9, False),
        }
        votes = sum(r.significant for r in results.values())
        assert not votes > len(results) / 2

    def test_insufficient_members(self):
        with pytest.raises(InsufficientDataError):
            ensemble_seasonal(np.arange(10.0))

    def test_all_p_values_in_unit_interval(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            z = rng.poisson(20, size=rng.integers(35, 120)).astype(float)
            report = ensemble_seasonal(z)
            for r in report.results.values():
                assert 0.0 <= r.p_value <= 1.0


class TestNullCalibration:
    @pytest.mark.parametrize("name,run", [
        ("friedman", lambda z: friedman_test(z)[2]),
        ("kruskal", lambda z: kruskal_wallis_test(z)[2]),
        ("welch", lambda z: welch_anova_test(z)[3]),
        ("qs", lambda z: qs_test(z)[2]),
    ])
    def test_type_one_error(self, name, run):
        n_seeds = 500
        rejections = 0
        for seed in range(n_seeds):
            rng = np.random.default_rng(seed)
            rejections += run(rng.normal(size=140)) < 0.05
        assert abs(rejections / n_seeds - 0.05) <= 0.02


class TestWeeklyMaxProfile:
    def test_saturday_peak(self):
        z = incr([0, 0, 0, 0, 0, 0, 9] * 3)
        profile = weekly_max_profile(z)
        assert [r[2] for r in profile.rows] == [6, 6, 6]  # Saturday index

    def test_all_equal_week_ties_to_sunday(self):
        z = incr([1.0] * 7)
        profile = weekly_max_profile(z)
        assert profile.rows[0][2] == 0

    def test_partial_weeks_counted(self):
        z = incr([1.0] * 16, start=dt.date(2020, 3, 18))  # Wednesday start
        profile = weekly_max_profile(z)
        assert len(profile.rows) == 1
        assert profile.n_partial_weeks_skipped == 2

    def test_by_state_aggregation(self):
        z = incr([0, 0, 0, 0, 0, 0, 9] * 2)
        counts = weekly_max_profile([z]).by_state()
        assert counts["Iowa"]["Saturday"] == 2


class TestCycleRemoval:
    def test_diff7_annihilates_weekly_signal(self):
        z = np.tile(np.arange(7.0), 5)
        removal = remove_weekly_cycle(z, "diff7")
        assert np.allclose(removal.values, 0.0)
        assert np.array_equal(removal.restore(), z)

    def test_constant_series_all_methods(self):
        z = np.full(35, 6.0)
        for method in ("diff7", "ma7", "weekday_dummies", "harmonic"):
            removal = remove_weekly_cycle(z, method)
            assert np.allclose(removal.values, 0.0, atol=1e-10)
            assert np.allclose(removal.restore(), z)

    def test_dummies_equal_harmonic(self):
        rng = np.random.default_rng(10)
        z = rng.normal(size=70) + np.tile([0.0, 5, 1, 2, 3, 9, 4], 10)
        a = remove_weekly_cycle(z, "weekday_dummies")
        b = remove_weekly_cycle(z, "harmonic")
        assert np.max(np.abs(a.values - b.values)) < 1e-8

    def test_ma7_restores(self):
        rng = np.random.default_rng(13)
        z = rng.poisson(30, size=40).astype(float)
        removal = remove_weekly_cycle(z, "ma7")
        assert np.allclose(removal.restore(), z, atol=1e-12)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            remove_weekly_cycle(np.arange(14.0), "diff7")
