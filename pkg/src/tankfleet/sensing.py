"""Agent-visible sensor readings of the vessel profile."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vessel import VesselParams, VesselState


class SensorConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SensorConfig:
    """``k == 1`` is the single mid-point sensor; ``k >= 2`` is an evenly spread array."""

    k: int = 1
    noise_std: float = 0.25

    def __post_init__(self):
        if self.k < 1:
            raise SensorConfigError("sensor count must be >= 1")
        if self.noise_std < 0:
            raise SensorConfigError("noise_std must be >= 0")

    @classmethod
    def midpoint(cls, noise_std: float = 0.25) -> "SensorConfig":
        return cls(1, noise_std)

    @classmethod
    def array(cls, k: int = 4, noise_std: float = 0.25) -> "SensorConfig":
        if k < 2:
            raise SensorConfigError("an array needs at least 2 sensors")
        return cls(k, noise_std)

    @property
    def kind(self) -> str:
        return "midpoint" if self.k == 1 else f"array{self.k}"

    def layer_indices(self, n_layers: int) -> np.ndarray:
        if self.k > n_layers:
            raise SensorConfigError(f"{self.k} sensors requested for a {n_layers}-layer vessel")
        if self.k == 1:
            return np.array([n_layers // 2])
        i = np.arange(self.k)
        return (i * (n_layers - 1)) // (self.k - 1)


@dataclass(frozen=True)
class Observation:
    sensor_temps: tuple
    step_index: int = 0

    def __post_init__(self):
        temps = tuple(float(t) for t in self.sensor_temps)
        if not all(np.isfinite(temps)):
            raise ValueError("observation contains non-finite values")
        object.__setattr__(self, "sensor_temps", temps)

    def __len__(self):
        return len(self.sensor_temps)


def observe(state: VesselState, params: VesselParams, config: SensorConfig,
            rng=None, step_index: int = 0) -> Observation:
    """Read the configured layers, add Gaussian noise, clip to the physical range.

    ``rng`` is a numpy Generator or an integer seed; it is only consulted when
    ``noise_std > 0``.
    """
    idx = config.layer_indices(params.n_layers)
    temps = np.asarray(state.layer_temps, dtype=float)[idx]
    if config.noise_std > 0:
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        temps = temps + rng.normal(0.0, config.noise_std, size=temps.size)
    temps = np.clip(temps, params.inlet_temp, params.max_temp)
    return Observation(tuple(temps), step_index)
