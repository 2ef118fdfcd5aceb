"""Visit counting, coverage and exploration policies over a discretised observation space."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .sensing import Observation


@dataclass(frozen=True)
class StateBinning:
    """Temperature grid shared by every sensor: bin ``floor(T / width)``, clamped to the edge bins.

    ``volume_classes`` are the draw-volume class edges used by the transition
    model features; visit bins are built from sensor temperatures only.
    """

    temp_bin_width: float = 5.0
    temp_max: float = 90.0
    sensor_count: int = 1
    volume_classes: tuple = (0.0, 10.0, 30.0)

    def __post_init__(self):
        if not self.temp_bin_width > 0:
            raise ValueError("temp_bin_width must be > 0")
        if self.sensor_count < 1:
            raise ValueError("sensor_count must be >= 1")

    @cached_property
    def n_temp_bins(self) -> int:
        return max(1, int(np.ceil(self.temp_max / self.temp_bin_width)))

    @property
    def total_bins(self) -> int:
        return self.n_temp_bins**self.sensor_count


class VisitCounts:
    def __init__(self, counts=None):
        self.counts = Counter()
        if counts:
            for b, n in dict(counts).items():
                if n < 0:
                    raise ValueError("visit counts must be non-negative")
                if n:
                    self.counts[int(b)] = int(n)

    @property
    def total_visits(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, b) -> int:
        return self.counts.get(b, 0)

    def add(self, b: int, n: int = 1) -> None:
        self.counts[b] += n

    def merged(self, *others: "VisitCounts") -> "VisitCounts":
        out = VisitCounts()
        out.counts = self.counts.copy()
        for o in others:
            out.counts.update(o.counts)
        return out

    def visited(self) -> int:
        return sum(1 for n in self.counts.values() if n > 0)

    def __eq__(self, other):
        return isinstance(other, VisitCounts) and +self.counts == +other.counts


def bin_of(obs, binning: StateBinning) -> int:
    if isinstance(obs, Observation):
        temps = obs.sensor_temps
    elif isinstance(obs, np.ndarray) and obs.ndim == 1:
        temps = obs.tolist()
    else:
        temps = np.atleast_1d(obs).tolist()
    if len(temps) != binning.sensor_count:
        raise ValueError(f"binning expects {binning.sensor_count} sensors, got {len(temps)}")
    n = binning.n_temp_bins
    w = binning.temp_bin_width
    b = 0
    for t in temps:
        i = math.floor(t / w)
        b = b * n + min(max(i, 0), n - 1)
    return b


def coverage(counts: VisitCounts, binning: StateBinning) -> float:
    total = binning.total_bins
    if total == 0:
        raise ValueError("binning has no bins")
    return counts.visited() / total


def novelty_bonus(counts: VisitCounts, b: int) -> float:
    return 1.0 / math.sqrt(counts[b] + 1.0)


@dataclass(frozen=True)
class ExplorationPolicy:
    kind: str = "none"  # none | eps_greedy | targeted
    epsilon: float = 0.0
    bonus_weight: float = 0.0
    shared_counts: bool = False

    def __post_init__(self):
        if self.kind not in ("none", "eps_greedy", "targeted"):
            raise ValueError(f"unknown exploration kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.bonus_weight < 0:
            raise ValueError("bonus_weight must be >= 0")

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def eps_greedy(cls, epsilon: float = 0.1, shared_counts: bool = False):
        return cls("eps_greedy", epsilon=epsilon, shared_counts=shared_counts)

    @classmethod
    def targeted(cls, bonus_weight: float = 4.0, shared_counts: bool = True):
        return cls("targeted", bonus_weight=bonus_weight, shared_counts=shared_counts)


def choose_action(policy: ExplorationPolicy, greedy_action: int, candidates, binning: StateBinning,
                  rng, counts: VisitCounts | None = None, targets=None,
                  allow_override: bool = True) -> int:
    """Pick the executed action given the planner's greedy choice.

    ``candidates[a]`` is the predicted next observation under action ``a``.
    A bin in the agent's own ``targets`` earns the novelty bonus twice.
    ``allow_override=False`` (planner predicts a comfort problem under the
    other action) forces the greedy action, after any random draws, so the
    policy stream stays aligned.
    """
    greedy_action = int(greedy_action)
    if policy.kind == "none":
        return greedy_action
    if candidates is None or len(candidates) != 2 or any(c is None for c in candidates):
        raise ValueError("predicted next observations are required for both actions")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)

    if policy.kind == "eps_greedy":
        u = rng.random()
        r = int(rng.integers(2))
        action = r if u < policy.epsilon else greedy_action
    else:
        counts = counts if counts is not None else VisitCounts()
        targets = targets if targets is not None else ()
        scores = []
        for a in (0, 1):
            b = bin_of(candidates[a], binning)
            boost = 2.0 if b in targets else 1.0
            rank = 0.0 if a == greedy_action else 1.0
            scores.append(-rank + policy.bonus_weight * boost * novelty_bonus(counts, b))
        other = 1 - greedy_action
        action = other if scores[other] > scores[greedy_action] else greedy_action
    if action != greedy_action and not allow_override:
        return greedy_action
    return action


def assign_targets(pooled: VisitCounts, binning: StateBinning, n_agents: int) -> list[list[int]]:
    """Deal every bin, least visited first (ties by id), round-robin over agents."""
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    total = binning.total_bins
    counts = np.zeros(total, dtype=np.int64)
    for b, n in pooled.counts.items():
        if 0 <= b < total:
            counts[b] = n
    order = np.lexsort((np.arange(total), counts))
    return [order[i::n_agents].tolist() for i in range(n_agents)]
