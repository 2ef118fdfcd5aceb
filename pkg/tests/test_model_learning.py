import numpy as np
import pytest

from oracles import BinMeanOracle, project_reference
from tankfleet.model_learning import (BinningSpec, EmptyDatasetError, FeatureBinning, KnowledgeConfig,
                                      SensorCountMismatch, TransitionDataset, TransitionSample, evaluate_mae,
                                      featurize, fit, pool, predict, project_constraints, update_memory)
from tankfleet.sensing import Observation, SensorConfig, observe
from tankfleet.vessel import StepInput, VesselParams, VesselState, step

OFF = KnowledgeConfig.none()
# one sensor split at 50 degC x action x {no draw, draw}: eight bins
TOY = FeatureBinning(([50.0], [0.5], [0.0]), (True, True, False))


def dataset(obs, action, draw, next_obs, household=None):
    obs = np.asarray(obs, dtype=float).reshape(len(action), -1)
    n = len(action)
    return TransitionDataset(obs, action, draw, np.zeros(n), np.zeros(n),
                             np.asarray(next_obs, dtype=float).reshape(obs.shape), household)


def random_toy(rng, n):
    obs = rng.choice(np.arange(30.0, 71.0), size=n)
    action = rng.integers(0, 2, size=n)
    draw = np.where(rng.random(n) < 0.5, 0.0, rng.uniform(0.5, 40, size=n).round(1))
    return dataset(obs, action, draw, obs + rng.normal(0, 3, size=n).round(2))


class TestFeaturize:
    def test_base_features(self):
        np.testing.assert_array_equal(featurize(Observation((50.0,)), 1, 0.0, OFF), [50, 1, 0])

    def test_engineered_ordering(self):
        kn = KnowledgeConfig(enabled=True, engineered_features=True)
        np.testing.assert_array_equal(featurize([50.0], 0, 10.0, kn, (4, 25.0)), [50, 0, 10, 4, 25, 50])

    def test_pure(self):
        a = featurize([40.0, 60.0], 1, 3.0, KnowledgeConfig.full(), (2, 1.0))
        b = featurize([40.0, 60.0], 1, 3.0, KnowledgeConfig.full(), (2, 1.0))
        np.testing.assert_array_equal(a, b)

    def test_memory_update(self):
        assert update_memory((3, 12.0), 0, 5.0) == (4, 17.0)
        assert update_memory((3, 12.0), 1, 5.0) == (0, 0.0)

    def test_knowledge_flags_require_enabled(self):
        with pytest.raises(ValueError):
            KnowledgeConfig(monotone_profile=True)


class TestFit:
    def test_two_samples_one_bin(self):
        m = fit(dataset([52.0, 53.0], [1, 1], [0, 0], [54.0, 57.0]), OFF, TOY)
        assert m.n_populated == 1
        assert m.mean_delta[0, 0] == pytest.approx(3.0)
        assert predict(m, Observation((50.0,)), 1, 0.0).sensor_temps == pytest.approx((53.0,))

    def test_single_sample_bins_store_exact_delta(self):
        d = dataset([40.0, 60.0], [0, 1], [0, 5], [38.25, 61.5])
        stats = fit(d, OFF, TOY).bin_stats
        assert sorted(v[1][0] for v in stats.values()) == [-1.75, 1.5]
        assert all(v[0] == 1 for v in stats.values())

    def test_order_independent(self, rng):
        d = random_toy(rng, 40)
        perm = rng.permutation(40)
        assert fit(d, OFF, TOY).bin_stats == fit(d.subset(perm), OFF, TOY).bin_stats

    def test_identity_transitions_predict_input(self, rng):
        d = random_toy(rng, 30)
        d = dataset(d.obs, d.action, d.draw, d.obs)
        m = fit(d, OFF, TOY)
        for x in (12.0, 49.9, 50.0, 88.0):
            assert predict(m, [x], 1, 20.0).sensor_temps == (x,)

    def test_empty_neighbour_borrowed(self):
        two = FeatureBinning(([50.0], [0.5], []), (True, True, True))
        m = fit(dataset([60.0], [0], [0], [62.0]), OFF, two)
        assert predict(m, [40.0], 0, 0.0).sensor_temps == pytest.approx((42.0,))

    def test_matches_oracle_on_toy_datasets(self, rng):
        oracle_priority = (1, 2)  # action, then draw class, then the rest
        for _ in range(20):
            n = int(rng.integers(1, 51))
            d = random_toy(rng, n)
            m = fit(d, OFF, TOY)
            oracle = BinMeanOracle(TOY.edges, TOY.lower_inclusive, oracle_priority)
            oracle.fit(d.features(OFF), d.next_obs - d.obs)
            assert m.n_populated == len(oracle.bins) <= 8
            for _ in range(16):
                x = float(rng.choice([20.0, 49.5, 50.0, 50.5, 80.0]))
                a = int(rng.integers(0, 2))
                v = float(rng.choice([0.0, 0.1, 25.0]))
                want = x + oracle.lookup([x, a, v])[0]
                assert predict(m, [x], a, v).sensor_temps[0] == pytest.approx(want, abs=1e-12)

    def test_pooled_counts_add(self, rng):
        a, b = random_toy(rng, 5), random_toy(rng, 5)
        ca, cb = fit(a, OFF, TOY).bin_stats, fit(b, OFF, TOY).bin_stats
        cp = fit(pool([a, b]), OFF, TOY).bin_stats
        for k in set(ca) | set(cb):
            assert cp[k][0] == ca.get(k, (0,))[0] + cb.get(k, (0,))[0]

    def test_copies_scale_counts_only(self, rng):
        d = random_toy(rng, 25)
        one = fit(d, OFF, TOY)
        three = fit(pool([d, d, d]), OFF, TOY)
        np.testing.assert_array_equal(three.counts, 3 * one.counts)
        np.testing.assert_allclose(three.mean_delta, one.mean_delta, rtol=0, atol=1e-12)

    def test_default_binning_with_engineered_features(self, rng):
        d = random_toy(rng, 50)
        kn = KnowledgeConfig(enabled=True, engineered_features=True)
        m = fit(d, kn, BinningSpec())
        assert m.binning.n_features == 6
        assert m.binning.dims[:3] == (18, 2, 4)
        assert np.isfinite(predict(m, [45.0], 1, 3.0, (5, 7.0)).sensor_temps).all()

    def test_summary_lists_bins(self, rng):
        m = fit(random_toy(rng, 20), OFF, TOY)
        text = m.summary()
        assert f"populated_bins: {m.n_populated}" in text
        assert len(text.strip().splitlines()) == 6 + m.n_populated

    def test_errors(self):
        with pytest.raises(EmptyDatasetError):
            fit(TransitionDataset.empty(1), OFF)
        m = fit(dataset([50.0], [0], [0], [50.0]), OFF, TOY)
        with pytest.raises(SensorCountMismatch):
            predict(m, [50.0, 60.0], 0, 0.0)


class TestProjection:
    def test_clamp(self):
        kn = KnowledgeConfig(enabled=True, endpoint_clamp=True)
        np.testing.assert_array_equal(project_constraints([105.0], kn, (1, None, 10.0, 90.0)), [90.0])

    def test_monotone(self):
        kn = KnowledgeConfig(enabled=True, monotone_profile=True)
        np.testing.assert_allclose(project_constraints([55.0, 50.0, 60.0], kn, (1, None, 10, 90)),
                                   [52.5, 52.5, 60.0])

    def test_standby_cap(self):
        kn = KnowledgeConfig(enabled=True, standby_non_increasing=True)
        np.testing.assert_array_equal(project_constraints([62.0], kn, (0, [60.0], 10, 90)), [60.0])
        np.testing.assert_array_equal(project_constraints([62.0], kn, (1, [60.0], 10, 90)), [62.0])

    def test_disabled_is_identity(self):
        np.testing.assert_array_equal(project_constraints([105.0, 3.0], OFF, (0, [1.0, 1.0], 10, 90)), [105, 3])

    def test_matches_reference_and_is_idempotent(self, rng):
        for _ in range(300):
            k = int(rng.integers(1, 6))
            flags = rng.integers(0, 2, size=3).astype(bool)
            kn = KnowledgeConfig(enabled=True, endpoint_clamp=flags[0], monotone_profile=flags[1],
                                 standby_non_increasing=flags[2])
            pred = rng.integers(0, 100, size=k).astype(float)
            prev = rng.integers(10, 90, size=k).astype(float)
            action = int(rng.integers(0, 2))
            ctx = (action, prev, 10.0, 90.0)
            out = project_constraints(pred, kn, ctx)
            ref = project_reference(pred, prev, action, 10.0, 90.0, *flags)
            np.testing.assert_allclose(out, ref, atol=1e-9)
            np.testing.assert_allclose(project_constraints(out, kn, ctx), out, atol=1e-12)
            if flags[0]:
                assert out.min() >= 10.0 and out.max() <= 90.0
            if flags[1]:
                assert np.all(np.diff(out) >= -1e-12)
            if flags[2] and action == 0:
                assert np.all(out <= prev + 1e-12)

    def test_monotone_predictions_from_any_model(self, rng):
        kn = KnowledgeConfig(enabled=True, monotone_profile=True)
        obs = rng.uniform(20, 80, size=(60, 3))
        d = TransitionDataset(obs, rng.integers(0, 2, 60), np.zeros(60), np.zeros(60), np.zeros(60),
                              obs + rng.normal(0, 8, size=(60, 3)))
        m = fit(d, kn)
        pred = m.predict_batch(rng.uniform(10, 90, size=(200, 3)), rng.integers(0, 2, 200), 0.0, 0.0, 0.0)
        assert np.all(np.diff(pred, axis=1) >= -1e-12)


class TestDatasets:
    def test_pool_sizes_and_provenance(self, rng):
        a = random_toy(rng, 10)
        b = random_toy(rng, 15)
        b.household[:] = 7
        p = pool([a, b])
        assert len(p) == 25
        assert (p.household == 7).sum() == 15

    def test_pool_of_one_is_identity(self, rng):
        a = random_toy(rng, 4)
        assert pool([a]) is a

    def test_pool_mixed_sensor_counts(self):
        with pytest.raises(SensorCountMismatch):
            pool([TransitionDataset.empty(1), TransitionDataset.empty(2)])
        with pytest.raises(EmptyDatasetError):
            pool([])

    def test_sample_validation(self):
        with pytest.raises(SensorCountMismatch):
            TransitionSample(Observation((1.0,)), 0, 0.0, Observation((1.0, 2.0)))

    def test_samples_round_trip(self, rng):
        d = random_toy(rng, 6)
        back = TransitionDataset.from_samples(d.samples)
        np.testing.assert_array_equal(back.obs, d.obs)
        np.testing.assert_array_equal(back.next_obs, d.next_obs)
        np.testing.assert_array_equal(back.action, d.action)

    def test_csv_round_trip(self, tmp_path, rng):
        d = random_toy(rng, 12)
        d.to_csv(tmp_path / "t.csv")
        header = (tmp_path / "t.csv").read_text().splitlines()[0]
        assert header == "household_id,step,obs_0,action,draw_volume,time_since_reheat,vol_since_reheat,next_obs_0"
        back = TransitionDataset.from_csv(tmp_path / "t.csv")
        np.testing.assert_allclose(back.obs, d.obs, rtol=1e-5)
        np.testing.assert_allclose(back.next_obs, d.next_obs, rtol=1e-5)
        np.testing.assert_array_equal(back.step, d.step)


class TestMae:
    def test_perfect_recall(self, rng):
        d = random_toy(rng, 30)
        d = dataset(d.obs, d.action, d.draw, d.obs + 2.0)
        assert evaluate_mae(fit(d, OFF, TOY), d) == pytest.approx(0.0, abs=1e-12)

    def test_hand_residuals(self):
        m = fit(dataset([50.0], [0], [0], [51.0]), OFF, TOY)
        held = dataset([50.0, 50.0], [0, 0], [0, 0], [50.0, 54.0])  # residuals +1 and -3
        assert evaluate_mae(m, held) == pytest.approx(2.0)

    def test_empty_heldout(self):
        m = fit(dataset([50.0], [0], [0], [51.0]), OFF, TOY)
        with pytest.raises(EmptyDatasetError):
            evaluate_mae(m, TransitionDataset.empty(1))


def simulated_transitions(seed, n):
    """Random actions and draws on the default vessel, read by one noisy midpoint sensor."""
    rng = np.random.default_rng(seed)
    p = VesselParams()
    cfg = SensorConfig.midpoint(0.25)
    state = VesselState.uniform(p, 55.0)
    obs, act, draw, nxt = [], [], [], []
    o = observe(state, p, cfg, rng)
    for _ in range(n):
        a = int(rng.random() < 0.3)
        v = float(rng.choice([0.0, 0.0, 0.0, 5.0, 20.0, 40.0]))
        state = step(state, p, StepInput(a, v)).next_state
        o2 = observe(state, p, cfg, rng)
        obs.append(o.sensor_temps)
        act.append(a)
        draw.append(v)
        nxt.append(o2.sensor_temps)
        o = o2
    return dataset(obs, act, draw, nxt)


class TestPooledData:
    def test_more_data_does_not_hurt(self):
        gaps = []
        for seed in range(5):
            full = simulated_transitions(seed, 3000)
            held = simulated_transitions(100 + seed, 600)
            small = full.subset(np.arange(300))
            gaps.append(evaluate_mae(fit(full, OFF), held) - evaluate_mae(fit(small, OFF), held))
        assert np.median(gaps) <= 0.1
