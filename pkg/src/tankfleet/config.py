"""Experiment configuration and its flat ``section.key = value`` file format.

Grammar, one entry per line::

    # comment
    n_households = 10
    vessel.n_layers = 10
    planner.horizon = 16
    archetypes = morning_peak, evening_peak, family, flat

Keys without a section belong to the experiment itself (``experiment.`` is
accepted as an explicit prefix).  Values are parsed as int, float, bool
(``true``/``false``), comma-separated tuples or bare strings.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .control import PlannerConfig, RbcConfig
from .model_learning import BinningSpec
from .vessel import VesselParams

STRATEGIES = ("RBC", "SARL_K", "MARL_K", "SARL_KI", "MARL_KI")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExplorationSettings:
    sarl_epsilon: float = 0.1
    marl_bonus_weight: float = 4.0
    lookahead_steps: int = 4  # targeted scoring looks at the bin reached by holding an action


@dataclass(frozen=True)
class SensingSettings:
    noise_std: float = 0.25
    array_k: int = 4


@dataclass(frozen=True)
class ExperimentConfig:
    n_households: int = 10
    n_days: int = 60
    seed: int = 0
    strategies: tuple = STRATEGIES
    archetypes: tuple = ("morning_peak", "evening_peak", "family", "flat")
    model_refresh_period: int = 1
    heldout_fraction: float = 0.2
    warmup_days: int = 3
    initial_temp: float = 60.0
    comfort_threshold: float = 45.0
    iteration_order: str = "forward"
    intensity_scale: float = 1.0  # multiplies every household's draw probabilities
    vessel: VesselParams = field(default_factory=VesselParams)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    rbc: RbcConfig = field(default_factory=RbcConfig)
    binning: BinningSpec = field(default_factory=BinningSpec)
    exploration: ExplorationSettings = field(default_factory=ExplorationSettings)
    sensing: SensingSettings = field(default_factory=SensingSettings)

    def __post_init__(self):
        if self.n_households < 1:
            raise ConfigError("n_households must be >= 1")
        if self.n_days < 1:
            raise ConfigError("n_days must be >= 1")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ConfigError("heldout_fraction must lie in [0, 1)")
        if self.model_refresh_period < 1:
            raise ConfigError("model_refresh_period must be >= 1")
        if self.iteration_order not in ("forward", "reverse"):
            raise ConfigError("iteration_order must be 'forward' or 'reverse'")
        if self.intensity_scale < 0:
            raise ConfigError("intensity_scale must be >= 0")
        if not self.archetypes:
            raise ConfigError("at least one archetype is required")
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        if unknown or not self.strategies:
            raise ConfigError(f"unknown strategies {unknown}; choose from {STRATEGIES}")
        if self.n_households < 2 and any(s.startswith("MARL") for s in self.strategies):
            raise ConfigError("MARL strategies need at least 2 households")
        if self.sensing.array_k > self.vessel.n_layers:
            raise ConfigError("array_k exceeds the number of vessel layers")
        if self.comfort_threshold != self.planner.comfort_threshold:
            object.__setattr__(self, "planner",
                               dataclasses.replace(self.planner, comfort_threshold=self.comfort_threshold))
        if abs(self.planner.step_energy_kwh - self.vessel.step_energy_kwh) > 1e-12:
            object.__setattr__(self, "planner",
                               dataclasses.replace(self.planner, step_energy_kwh=self.vessel.step_energy_kwh))


_SECTIONS = {
    "vessel": "vessel",
    "planner": "planner",
    "rbc": "rbc",
    "binning": "binning",
    "exploration": "exploration",
    "sensing": "sensing",
}


def parse_value(text: str):
    s = text.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        return s[1:-1]
    if "," in s:
        return tuple(parse_value(p) for p in s.split(",") if p.strip())
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def _as_tuple(v):
    return v if isinstance(v, tuple) else (v,)


def build_config(entries: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    top = {}
    nested = {name: {} for name in _SECTIONS}
    for key, value in entries.items():
        if key.startswith("experiment."):
            key = key[len("experiment."):]
        section, _, name = key.rpartition(".")
        if not section:
            top[key] = value
        elif section in nested:
            nested[section][name] = value
        else:
            raise ConfigError(f"unknown config section {section!r} in key {key!r}")

    kwargs = {}
    for section, values in nested.items():
        if not values:
            continue
        current = getattr(base, _SECTIONS[section])
        known = {f.name for f in dataclasses.fields(current)}
        bad = sorted(set(values) - known)
        if bad:
            raise ConfigError(f"unknown keys in [{section}]: {bad}")
        if section == "binning" and "volume_edges" in values:
            values["volume_edges"] = tuple(float(v) for v in _as_tuple(values["volume_edges"]))
        try:
            kwargs[_SECTIONS[section]] = dataclasses.replace(current, **values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [{section}] settings: {exc}") from exc

    known = {f.name for f in dataclasses.fields(ExperimentConfig)} - set(_SECTIONS.values())
    bad = sorted(set(top) - known)
    if bad:
        raise ConfigError(f"unknown experiment keys: {bad}")
    for key in ("strategies", "archetypes"):
        if key in top:
            top[key] = tuple(str(v) for v in _as_tuple(top[key]))
    kwargs.update(top)
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(parse_config_text(text, str(path)))
