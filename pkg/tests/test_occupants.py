import numpy as np
import pytest

from tankfleet.occupants import (ARCHETYPES, JITTER, DrawSeries, HouseholdProfile, activity_multipliers,
                                 archetype_template, generate_draws, lag_autocorrelation, make_profile)


def flat_profile(level, **kw):
    return HouseholdProfile(household_id=0, base_intensity=np.full(96, level), **kw)


class TestProfiles:
    def test_flat_is_constant(self):
        p = make_profile("flat", 3, seed=11)
        assert np.ptp(p.base_intensity) == 0.0

    def test_deterministic(self):
        a = make_profile("family", 2, seed=5)
        b = make_profile("family", 2, seed=5)
        np.testing.assert_array_equal(a.base_intensity, b.base_intensity)

    @pytest.mark.parametrize("archetype", ARCHETYPES)
    def test_jitter_bounded_around_shared_template(self, archetype):
        t = archetype_template(archetype)
        for hid in range(5):
            p = make_profile(archetype, hid, seed=9).base_intensity
            assert np.all(np.abs(p - t) <= JITTER * t + 1e-15)

    def test_same_archetype_correlated_more_than_disjoint(self):
        peaks = ("morning_peak", "evening_peak", "family")
        same = [np.corrcoef(make_profile(a, 0, 1).base_intensity, make_profile(a, 1, 1).base_intensity)[0, 1]
                for a in peaks]
        cross = np.corrcoef(make_profile("morning_peak", 0, 1).base_intensity,
                            make_profile("evening_peak", 1, 1).base_intensity)[0, 1]
        assert min(same) > 0.3
        assert cross < min(same)

    def test_unknown_archetype(self):
        with pytest.raises(ValueError):
            make_profile("night_owl", 0, 0)

    @pytest.mark.parametrize("kwargs", [
        dict(base_intensity=np.full(96, 1.5)), dict(base_intensity=np.full(96, -0.1)),
        dict(base_intensity=np.zeros(96), activity_persistence=1.0), dict(base_intensity=[]),
    ])
    def test_profile_validation(self, kwargs):
        with pytest.raises(ValueError):
            HouseholdProfile(household_id=0, **kwargs)


class TestDraws:
    def test_zero_intensity_gives_no_draws(self):
        s = generate_draws(flat_profile(0.0), 50, seed=1)
        assert len(s) == 0

    def test_deterministic(self):
        p = make_profile("evening_peak", 4, 2)
        a, b = generate_draws(p, 20, 77), generate_draws(p, 20, 77)
        np.testing.assert_array_equal(a.steps, b.steps)
        np.testing.assert_array_equal(a.volumes, b.volumes)

    def test_series_invariants(self):
        s = generate_draws(make_profile("family", 1, 3), 30, 4, max_volume=200.0)
        assert np.all(np.diff(s.steps) > 0)
        assert np.all(s.volumes > 0) and np.all(s.volumes <= 200.0)
        assert s.steps.max() < 30 * 96

    def test_flat_mean_count_matches_expectation(self):
        s = generate_draws(flat_profile(0.1, activity_noise_std=0.0), 1000, seed=3)
        assert len(s) / 1000 == pytest.approx(0.1 * 96, rel=0.05)

    def test_count_matches_conditional_expectation(self):
        # expected count given the day multipliers; the generator draws those first
        profile = flat_profile(0.1)
        mult = activity_multipliers(profile, 1000, np.random.default_rng(3))
        p = np.clip(mult[:, None] * 0.1, 0.0, 1.0) * np.ones(96)
        expected, sd = p.sum(), np.sqrt((p * (1 - p)).sum())
        assert abs(len(generate_draws(profile, 1000, seed=3)) - expected) < 4 * sd

    def test_multipliers_have_unit_mean(self):
        m = activity_multipliers(flat_profile(0.1), 200000, np.random.default_rng(0))
        assert m.mean() == pytest.approx(1.0, abs=0.01)

    def test_daily_totals_autocorrelated(self):
        p = make_profile("family", 0, 8, activity_persistence=0.7)
        totals = generate_draws(p, 2000, 21).daily_totals(96, 2000)
        assert lag_autocorrelation(totals, 1) > 0.3

    def test_csv_round_trip(self, tmp_path):
        s = generate_draws(make_profile("family", 1, 3), 5, 4)
        s.to_csv(tmp_path / "d.csv")
        assert (tmp_path / "d.csv").read_text().splitlines()[0] == "step_index,volume_l"
        back = DrawSeries.from_csv(tmp_path / "d.csv")
        np.testing.assert_array_equal(back.steps, s.steps)
        np.testing.assert_allclose(back.volumes, s.volumes, rtol=1e-5)

    def test_series_validation(self):
        with pytest.raises(ValueError):
            DrawSeries([3, 2], [1.0, 1.0])
        with pytest.raises(ValueError):
            DrawSeries([1, 2], [1.0, 0.0])

    def test_dense_and_daily_totals(self):
        s = DrawSeries([0, 5, 97], [2.0, 3.0, 4.0])
        dense = s.dense(192)
        assert dense[5] == 3.0 and dense.sum() == 9.0
        np.testing.assert_array_equal(s.daily_totals(96, 2), [5.0, 4.0])


def reference_autocorrelation(x, lag):
    x = [float(v) for v in x]
    m = sum(x) / len(x)
    num = sum((x[i] - m) * (x[i + lag] - m) for i in range(len(x) - lag))
    den = sum((v - m) ** 2 for v in x)
    return num / den


class TestAutocorrelation:
    def test_constant_series_undefined(self):
        with pytest.raises(ValueError):
            lag_autocorrelation([3.0] * 10, 1)

    def test_ramp(self):
        # deviations -4.5..4.5: sum of neighbour products 57.75 over 82.5
        assert lag_autocorrelation(np.arange(10), 1) == pytest.approx(57.75 / 82.5)
        assert lag_autocorrelation(np.arange(10), 1) == pytest.approx(reference_autocorrelation(range(10), 1))

    def test_matches_reference(self, rng):
        x = rng.normal(size=50)
        for lag in (1, 2, 7):
            assert lag_autocorrelation(x, lag) == pytest.approx(reference_autocorrelation(x, lag))

    def test_independent_noise(self):
        x = np.random.default_rng(99).normal(size=10000)
        assert abs(lag_autocorrelation(x, 1)) < 0.05

    def test_lag_must_fit(self):
        with pytest.raises(ValueError):
            lag_autocorrelation([1.0, 2.0], 2)
