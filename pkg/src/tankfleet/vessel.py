"""Multi-node model of a stratified hot-water vessel with an electric element.

Layers are indexed from the bottom (0) to the top (n_layers - 1).  One call to
:func:`step` advances the vessel by ``dt`` seconds:

1. plug-flow draw from the top, mains water entering at the bottom
2. heating of the element layer, truncated at the thermostat cutoff
3. explicit conduction between neighbours and losses to ambient
4. buoyancy mixing of any inverted layers

Energies are kJ internally and kWh at the API surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

from .isotonic import pava_inplace

KJ_PER_KWH = 3600.0


class VesselInputError(ValueError):
    """Raised for step inputs that the vessel cannot accept."""


class VesselNumericError(ArithmeticError):
    """Raised when the state becomes non-finite."""


@dataclass(frozen=True)
class VesselParams:
    n_layers: int = 10
    volume_total: float = 200.0  # L
    heater_power: float = 2.4  # kW
    heater_layer: int = 0
    inlet_temp: float = 10.0  # degC
    ambient_temp: float = 20.0  # degC
    max_temp: float = 90.0  # degC, thermostat cutoff
    loss_coeff: float = 0.2  # W/K per layer
    cond_coeff: float = 1.0  # W/K between adjacent layers
    specific_heat: float = 4.186  # kJ/(kg K)
    density: float = 1.0  # kg/L
    dt: float = 900.0  # s

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        for name in ("volume_total", "heater_power", "specific_heat", "density", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.loss_coeff < 0 or self.cond_coeff < 0:
            raise ValueError("loss_coeff and cond_coeff must be >= 0")
        if not 0 <= self.heater_layer < self.n_layers:
            raise ValueError("heater_layer must lie in [0, n_layers)")
        if not self.inlet_temp < self.max_temp:
            raise ValueError("inlet_temp must be below max_temp")
        if not self.inlet_temp <= self.ambient_temp <= self.max_temp:
            # losses relax layers toward ambient; outside the range they would
            # push temperatures out of [inlet_temp, max_temp]
            raise ValueError("ambient_temp must lie in [inlet_temp, max_temp]")
        # explicit update: each new temperature must be a convex combination of
        # the old neighbour and ambient temperatures (no overshoot)
        if 2.0 * self.cond_fraction + self.loss_fraction > 1.0:
            raise ValueError(
                "cond_coeff/loss_coeff too large for dt: explicit update would overshoot "
                f"(2*{self.cond_fraction:.3g} + {self.loss_fraction:.3g} > 1)"
            )

    @property
    def layer_volume(self) -> float:
        return self.volume_total / self.n_layers

    @property
    def layer_capacity(self) -> float:
        """Heat capacity of one layer in kJ/K."""
        return self.layer_volume * self.density * self.specific_heat

    @property
    def cond_fraction(self) -> float:
        return self.cond_coeff * self.dt / 1000.0 / self.layer_capacity

    @property
    def loss_fraction(self) -> float:
        return self.loss_coeff * self.dt / 1000.0 / self.layer_capacity

    @property
    def step_energy_kwh(self) -> float:
        """Electrical energy of one full heating step."""
        return self.heater_power * self.dt / KJ_PER_KWH

    @cached_property
    def kernel_args(self) -> tuple:
        """Scalar parameters in the order the step kernel takes them."""
        return (self.layer_volume, self.inlet_temp, self.ambient_temp, self.max_temp, self.heater_layer,
                self.heater_power, self.dt, self.layer_capacity, self.cond_fraction, self.loss_fraction)

    @property
    def steps_per_day(self) -> int:
        spd = 86400.0 / self.dt
        if abs(spd - round(spd)) > 1e-9:
            raise ValueError("dt must divide one day")
        return int(round(spd))


@dataclass(frozen=True)
class VesselState:
    layer_temps: np.ndarray = field(default_factory=lambda: np.full(10, 60.0))

    def __post_init__(self):
        temps = np.array(self.layer_temps, dtype=float)
        temps.setflags(write=False)
        object.__setattr__(self, "layer_temps", temps)

    @classmethod
    def uniform(cls, params: VesselParams, temp: float) -> "VesselState":
        return cls(np.full(params.n_layers, float(temp)))


@dataclass(frozen=True)
class StepInput:
    action: int = 0
    draw_volume: float = 0.0


@dataclass(frozen=True)
class StepResult:
    next_state: VesselState
    energy_used: float  # kWh
    delivered_temp: float | None
    losses: float  # kWh


def buoyancy_mix(layer_temps, layer_volumes) -> np.ndarray:
    """Merge inverted neighbours into volume-weighted blocks until stratified.

    The merged profile is the volume-weighted isotonic fit of the input, so
    enthalpy is conserved and the result does not depend on merge order.
    """
    temps = np.array(layer_temps, dtype=float)
    vols = np.asarray(layer_volumes, dtype=float)
    if temps.shape != vols.shape:
        raise ValueError("layer_temps and layer_volumes must have equal length")
    if np.any(vols <= 0):
        raise ValueError("layer volumes must be positive")
    pava_inplace(temps, vols)
    return temps


def energy_content(state: VesselState, params: VesselParams, ref_temp: float) -> float:
    """Sensible heat above ``ref_temp`` in kWh."""
    temps = np.asarray(state.layer_temps, dtype=float)
    return float(np.sum(params.layer_capacity * (temps - ref_temp)) / KJ_PER_KWH)


@njit(cache=True)
def _step_kernel(temps, layer_volume, inlet, ambient, max_temp, heater_layer,
                 heater_power, dt, cap, r, loss, action, draw):
    """Advance ``temps`` in place; return (q_heat, delivered, q_loss) in kJ / degC."""
    n = temps.shape[0]
    delivered = np.nan
    if draw > 0.0:
        # integral of the profile from the bottom up to each layer boundary
        cum = np.empty(n + 1)
        cum[0] = 0.0
        for i in range(n):
            cum[i + 1] = cum[i] + temps[i] * layer_volume
        shifted = np.empty(n + 1)
        for i in range(n + 1):
            x = i * layer_volume - draw
            if x < 0.0:
                shifted[i] = inlet * x  # mains water below the tank
            else:
                j = min(int(x // layer_volume), n - 1)
                shifted[i] = cum[j] + temps[j] * (x - j * layer_volume)
        delivered = (cum[n] - shifted[n]) / draw
        for i in range(n):
            temps[i] = (shifted[i + 1] - shifted[i]) / layer_volume

    q_heat = 0.0
    h = heater_layer
    if action != 0 and temps[h] < max_temp:
        q_heat = heater_power * dt
        rise = q_heat / cap
        if temps[h] + rise > max_temp:
            q_heat = cap * (max_temp - temps[h])
            temps[h] = max_temp
        else:
            temps[h] += rise

    q_loss = 0.0
    if r > 0.0 or loss > 0.0:
        old = temps.copy()
        for i in range(n):
            d = -loss * (old[i] - ambient)
            q_loss -= d * cap
            if i > 0:
                d += r * (old[i - 1] - old[i])
            if i < n - 1:
                d += r * (old[i + 1] - old[i])
            temps[i] = old[i] + d

    vols = np.full(n, layer_volume)
    pava_inplace(temps, vols)
    for i in range(n):
        if temps[i] < inlet:
            temps[i] = inlet
        elif temps[i] > max_temp:
            temps[i] = max_temp
    return q_heat, delivered, q_loss


def step(state: VesselState, params: VesselParams, inp: StepInput) -> StepResult:
    draw = float(inp.draw_volume)
    if not np.isfinite(draw) or draw < 0:
        raise VesselInputError(f"draw_volume must be finite and >= 0, got {draw}")
    if draw > params.volume_total:
        raise VesselInputError(
            f"draw_volume {draw} L exceeds vessel volume {params.volume_total} L"
        )
    temps = np.array(state.layer_temps, dtype=float)
    if temps.shape != (params.n_layers,):
        raise VesselInputError(f"state has {temps.size} layers, params expect {params.n_layers}")
    # a sum is finite only if every term is
    if not math.isfinite(temps.sum()):
        raise VesselNumericError("non-finite layer temperature in input state")

    q_heat, delivered, q_loss = _step_kernel(temps, *params.kernel_args, 1 if inp.action else 0, draw)
    if not math.isfinite(temps.sum()):
        raise VesselNumericError("non-finite layer temperature after step")
    return StepResult(
        next_state=VesselState(temps),
        energy_used=q_heat / KJ_PER_KWH,
        delivered_temp=float(delivered) if draw > 0 else None,
        losses=q_loss / KJ_PER_KWH,
    )
