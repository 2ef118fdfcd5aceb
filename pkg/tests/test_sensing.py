import numpy as np
import pytest

from tankfleet.sensing import Observation, SensorConfig, SensorConfigError, observe
from tankfleet.vessel import VesselParams, VesselState

PROFILE = VesselState([10.0, 30.0, 50.0, 70.0])
P4 = VesselParams(n_layers=4, volume_total=100)


class TestObserve:
    def test_midpoint_uses_floor_half(self):
        obs = observe(PROFILE, P4, SensorConfig.midpoint(0.0))
        assert obs.sensor_temps == (50.0,)

    def test_array_endpoints(self):
        obs = observe(PROFILE, P4, SensorConfig.array(2, 0.0))
        assert obs.sensor_temps == (10.0, 70.0)

    def test_array_indices(self):
        assert SensorConfig.array(4).layer_indices(10).tolist() == [0, 3, 6, 9]
        assert SensorConfig.array(3).layer_indices(5).tolist() == [0, 2, 4]

    def test_full_array_is_full_profile(self):
        obs = observe(PROFILE, P4, SensorConfig.array(4, 0.0))
        assert obs.sensor_temps == tuple(PROFILE.layer_temps)

    def test_noiseless_is_deterministic_and_monotone(self):
        p = VesselParams()
        s = VesselState(np.linspace(15, 75, 10))
        a = observe(s, p, SensorConfig.array(5, 0.0))
        b = observe(s, p, SensorConfig.array(5, 0.0))
        assert a == b
        assert np.all(np.diff(a.sensor_temps) >= 0)

    def test_seeded_noise_and_clipping(self):
        p = VesselParams()
        s = VesselState(np.full(10, 10.0))
        a = observe(s, p, SensorConfig.array(4, 2.0), rng=5)
        b = observe(s, p, SensorConfig.array(4, 2.0), rng=5)
        assert a == b
        assert min(a.sensor_temps) >= p.inlet_temp

    def test_midpoint_reveals_one_value(self):
        obs = observe(VesselState.uniform(VesselParams(), 55), VesselParams(), SensorConfig.midpoint(), rng=1)
        assert len(obs) == 1

    def test_too_many_sensors(self):
        with pytest.raises(SensorConfigError):
            observe(PROFILE, P4, SensorConfig.array(5, 0.0))

    def test_config_validation(self):
        with pytest.raises(SensorConfigError):
            SensorConfig.array(1)
        with pytest.raises(SensorConfigError):
            SensorConfig(1, -0.1)

    def test_observation_rejects_nan(self):
        with pytest.raises(ValueError):
            Observation((np.nan,))
