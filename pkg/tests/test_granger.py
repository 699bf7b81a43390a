import math

import numpy as np
import pytest

from bellwether.granger import (DegenerateDay, GrangerDayOutcome,
                                InfluenceTally, daily_matrix, granger_test,
                                tally)

from test_varfevd import panel_from_returns


def causal_day(rng, beta=0.8, T=48):
    cause = rng.standard_normal(T)
    effect = np.empty(T)
    effect[0] = rng.standard_normal()
    effect[1:] = beta * cause[:-1] + rng.standard_normal(T - 1)
    return effect, cause


def outcome_from_counts(date, counts):
    """Fabricate a day outcome whose per-cause significant counts are given."""
    n = len(counts)
    significant = np.zeros((n, n), dtype=bool)
    for i, c in enumerate(counts):
        targets = [j for j in range(n) if j != i][:c]
        significant[i, targets] = True
    return GrangerDayOutcome(date, tuple(f"s{i}" for i in range(n)),
                             np.where(significant, 0.001, 0.5),
                             np.ones((n, n), dtype=int), significant)


class TestGrangerTest:
    def test_planted_causality_detected(self, rng):
        detections = 0
        for _ in range(200):
            effect, cause = causal_day(rng)
            p, lag, f = granger_test(effect, cause, 10)
            detections += p < 0.01
        assert detections / 200 >= 0.95

    def test_independent_size_within_bounds(self, rng):
        false_positives = 0
        for _ in range(500):
            p, _, _ = granger_test(rng.standard_normal(48),
                                   rng.standard_normal(48), 10)
            false_positives += p < 0.01
        assert false_positives / 500 <= 0.03

    def test_constant_cause_skipped(self, rng):
        with pytest.raises(DegenerateDay, match="constant"):
            granger_test(rng.standard_normal(48), np.zeros(48), 10)

    def test_short_day_rejected(self, rng):
        with pytest.raises(ValueError, match="observations"):
            granger_test(rng.standard_normal(15), rng.standard_normal(15), 10)

    def test_selected_lag_in_range(self, rng):
        effect, cause = causal_day(rng)
        p, lag, f = granger_test(effect, cause, 10)
        assert 1 <= lag <= 10
        assert 0.0 <= p <= 1.0 and f >= 0.0


class TestDailyMatrix:
    def test_planted_leader_counts(self, rng):
        # stock 0 causes 1 and 2 by construction; 1 and 2 cause nothing
        T = 48
        driver = rng.standard_normal(T)
        followers = [np.concatenate([[0.0], 0.9 * driver[:-1]])
                     + 0.3 * rng.standard_normal(T) for _ in range(2)]
        rp = panel_from_returns(np.vstack([driver, *followers]))
        outcome = daily_matrix(rp, rp.calendar.dates[0], lag_max=5)
        counts = outcome.cause_counts()
        assert counts[0] == 2
        assert counts[1] == 0 and counts[2] == 0

    def test_two_stock_panel_runs_two_tests(self, rng):
        rp = panel_from_returns(rng.standard_normal((2, 48)))
        outcome = daily_matrix(rp, rp.calendar.dates[0])
        tested = ~np.isnan(outcome.p_values)
        assert tested.sum() == 2
        assert not tested.diagonal().any()

    def test_skipped_pairs_recorded(self, rng):
        returns = rng.standard_normal((3, 48))
        returns[2] = 0.0
        rp = panel_from_returns(returns)
        outcome = daily_matrix(rp, rp.calendar.dates[0])
        assert len(outcome.skipped) == 4  # s2 unusable as cause and as effect
        assert np.isnan(outcome.p_values[2]).all()

    def test_counts_match_total_significant_pairs(self, rng):
        rp = panel_from_returns(rng.standard_normal((4, 48)) * 0.01)
        outcome = daily_matrix(rp, rp.calendar.dates[0], alpha=0.3)
        assert outcome.cause_counts().sum() == outcome.significant.sum()

    def test_alpha_extremes(self, rng):
        rp = panel_from_returns(rng.standard_normal((3, 48)))
        date = rp.calendar.dates[0]
        assert daily_matrix(rp, date, alpha=0.0).significant.sum() == 0
        full = daily_matrix(rp, date, alpha=1.0)
        assert full.significant.sum() == 6  # every tested ordered pair


class TestTally:
    def test_tie_day_increments_all_leaders(self):
        out = tally([outcome_from_counts("2021-01-04", [5, 5, 2, 0, 0, 0])])
        assert out["s0"].top_influencer_days == 1
        assert out["s1"].top_influencer_days == 1
        assert all(out[f"s{i}"].top_influencer_days == 0 for i in range(2, 6))

    def test_all_zero_day_increments_nobody(self):
        out = tally([outcome_from_counts("2021-01-04", [0, 0, 0])])
        assert all(t.top_influencer_days == 0 for t in out.values())

    def test_times_log_arithmetic(self):
        # a stock totalling 148 yearly impacts logs to ln(148)
        days = [outcome_from_counts(f"2021-01-{d + 4:02d}", [2, 0, 0])
                for d in range(74)]
        out = tally(days)
        assert out["s0"].total_causal_impacts == 148
        assert out["s0"].times_log == pytest.approx(math.log(148), abs=1e-9)
        assert out["s0"].times_log == pytest.approx(4.997, abs=1e-3)
        assert out["s1"].times_log == 0.0

    def test_day_order_invariance(self):
        days = [outcome_from_counts("2021-01-04", [3, 1, 0]),
                outcome_from_counts("2021-01-05", [0, 2, 2]),
                outcome_from_counts("2021-01-06", [1, 1, 1])]
        forward = tally(days)
        backward = tally(days[::-1])
        assert forward == backward

    def test_counts_bounded_by_days(self):
        days = [outcome_from_counts(f"2021-01-{d + 4:02d}", [1, 1, 0])
                for d in range(5)]
        out = tally(days)
        assert all(t.top_influencer_days <= 5 for t in out.values())
