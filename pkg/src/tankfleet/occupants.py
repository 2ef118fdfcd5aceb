"""Stochastic hot-water draw generator.

Draw occurrence is an inhomogeneous Bernoulli process over time-of-day slots.
Each day a shared activity multiplier, following a log-AR(1) process with mean
one, scales the household's intensity template, which makes daily totals
autocorrelated.  Households of the same archetype share a template, which
makes them cross-correlated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

STEPS_PER_DAY = 96
ARCHETYPES = ("morning_peak", "evening_peak", "flat", "family")
JITTER = 0.2


@dataclass(frozen=True)
class HouseholdProfile:
    household_id: int
    base_intensity: np.ndarray
    mean_draw_volume: float = 12.0
    volume_dispersion: float = 0.6
    activity_persistence: float = 0.7
    activity_noise_std: float = 0.35

    def __post_init__(self):
        b = np.array(self.base_intensity, dtype=float)
        if b.ndim != 1 or b.size == 0:
            raise ValueError("base_intensity must be a non-empty vector")
        if np.any(b < 0) or np.any(b > 1):
            raise ValueError("base_intensity entries must lie in [0, 1]")
        if not 0 <= self.activity_persistence < 1:
            raise ValueError("activity_persistence must lie in [0, 1)")
        if self.mean_draw_volume <= 0 or self.volume_dispersion < 0 or self.activity_noise_std < 0:
            raise ValueError("volume and noise parameters must be non-negative")
        b.setflags(write=False)
        object.__setattr__(self, "base_intensity", b)

    @property
    def steps_per_day(self) -> int:
        return self.base_intensity.size


@dataclass(frozen=True)
class DrawSeries:
    steps: np.ndarray
    volumes: np.ndarray

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.int64)
        vols = np.asarray(self.volumes, dtype=float)
        if steps.shape != vols.shape:
            raise ValueError("steps and volumes must have equal length")
        if steps.size and np.any(np.diff(steps) <= 0):
            raise ValueError("step indices must be strictly increasing")
        if np.any(vols <= 0):
            raise ValueError("draw volumes must be positive")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "volumes", vols)

    def __len__(self):
        return int(self.steps.size)

    def dense(self, n_steps: int) -> np.ndarray:
        """Volume per step over ``n_steps`` steps, zero where nothing is drawn."""
        out = np.zeros(n_steps)
        keep = self.steps < n_steps
        out[self.steps[keep]] = self.volumes[keep]
        return out

    def daily_totals(self, steps_per_day: int, n_days: int) -> np.ndarray:
        return self.dense(steps_per_day * n_days).reshape(n_days, steps_per_day).sum(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step_index", "volume_l"])
            for s, v in zip(self.steps, self.volumes):
                w.writerow([int(s), f"{v:.6g}"])

    @classmethod
    def from_csv(cls, path) -> "DrawSeries":
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            np.array([int(r["step_index"]) for r in rows], dtype=np.int64),
            np.array([float(r["volume_l"]) for r in rows]),
        )


def _bump(hours, centre, width, height):
    # circular distance so evening bumps wrap past midnight
    d = np.abs(hours - centre)
    d = np.minimum(d, 24.0 - d)
    return height * np.exp(-0.5 * (d / width) ** 2)


def archetype_template(archetype: str, steps_per_day: int = STEPS_PER_DAY) -> np.ndarray:
    hours = (np.arange(steps_per_day) + 0.5) * 24.0 / steps_per_day
    if archetype == "flat":
        return np.full(steps_per_day, 0.1)
    base = np.where((hours >= 7) & (hours < 23), 0.04, 0.005)
    if archetype == "morning_peak":
        t = base + _bump(hours, 7.0, 0.8, 0.35) + _bump(hours, 19.5, 1.5, 0.08)
    elif archetype == "evening_peak":
        t = base + _bump(hours, 7.5, 1.0, 0.08) + _bump(hours, 20.0, 1.2, 0.3)
    elif archetype == "family":
        t = (base + _bump(hours, 7.0, 0.7, 0.25) + _bump(hours, 12.5, 1.0, 0.08)
             + _bump(hours, 19.0, 1.2, 0.22))
    else:
        raise ValueError(f"unknown archetype {archetype!r}; expected one of {ARCHETYPES}")
    return np.clip(t, 0.0, 1.0)


def make_profile(archetype: str, household_id: int, seed: int, jitter: float = JITTER,
                 steps_per_day: int = STEPS_PER_DAY, **overrides) -> HouseholdProfile:
    """Archetype template with seeded multiplicative jitter in ``[1 - jitter, 1 + jitter]``.

    The flat archetype gets a single level factor so it stays constant over
    the day; the others are jittered per slot.
    """
    template = archetype_template(archetype, steps_per_day)
    rng = np.random.default_rng([int(seed), int(household_id)])
    if archetype == "flat":
        factor = rng.uniform(1 - jitter, 1 + jitter)
    else:
        factor = rng.uniform(1 - jitter, 1 + jitter, size=steps_per_day)
    intensity = np.clip(template * factor, 0.0, 1.0)
    return HouseholdProfile(household_id=household_id, base_intensity=intensity, **overrides)


def activity_multipliers(profile: HouseholdProfile, n_days: int, rng) -> np.ndarray:
    """Daily log-AR(1) multipliers with stationary mean exactly one."""
    phi = profile.activity_persistence
    sigma = profile.activity_noise_std
    stat_var = sigma**2 / (1.0 - phi**2)
    x = np.empty(n_days)
    eps = rng.normal(0.0, 1.0, size=n_days)
    x[0] = np.sqrt(stat_var) * eps[0]
    for d in range(1, n_days):
        x[d] = phi * x[d - 1] + sigma * eps[d]
    return np.exp(x - 0.5 * stat_var)


def generate_draws(profile: HouseholdProfile, n_days: int, seed: int,
                   max_volume: float | None = None) -> DrawSeries:
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    rng = np.random.default_rng(seed)
    spd = profile.steps_per_day
    mult = activity_multipliers(profile, n_days, rng)
    p = np.clip(mult[:, None] * profile.base_intensity[None, :], 0.0, 1.0).ravel()
    u = rng.random(p.size)
    sigma = profile.volume_dispersion
    mu = np.log(profile.mean_draw_volume) - 0.5 * sigma**2
    vols = rng.lognormal(mu, sigma, size=p.size)
    occurs = u < p
    steps = np.flatnonzero(occurs)
    vols = vols[occurs]
    if max_volume is not None:
        vols = np.minimum(vols, max_volume)
    assert steps.size == 0 or steps[-1] < n_days * spd
    return DrawSeries(steps, vols)


def lag_autocorrelation(daily_totals, lag: int) -> float:
    """Sample autocorrelation: lagged cross-products over the full-series variance."""
    x = np.asarray(daily_totals, dtype=float)
    if lag < 0 or x.size <= lag:
        raise ValueError("series must be longer than the lag")
    dev = x - x.mean()
    denom = float(np.dot(dev, dev))
    if denom == 0.0:
        raise ValueError("autocorrelation undefined for a zero-variance series")
    return float(np.dot(dev[: x.size - lag], dev[lag:]) / denom)
