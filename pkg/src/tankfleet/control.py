"""Reheat controllers: a hysteresis thermostat and a receding-horizon planner.

The planner enumerates every on/off sequence over the horizon with at most
``switch_limit`` action changes, rolls each one out through the learned
transition model and returns the first action of the cheapest sequence.
Cost is heating energy plus ``comfort_weight`` per step where a draw is
forecast and the top (or only) predicted sensor reading is below the comfort
threshold.  The search is depth-first over shared prefixes; branches whose
partial cost already matches the best complete sequence are cut, which
cannot change the returned action because partial costs never decrease.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .model_learning import TransitionModel, _predict_one, _temps
from .occupants import DrawSeries


class InsufficientHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class RbcConfig:
    low_threshold: float = 55.0
    high_threshold: float = 65.0

    def __post_init__(self):
        if not self.low_threshold < self.high_threshold:
            raise ValueError("low_threshold must be below high_threshold")


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 16
    comfort_threshold: float = 45.0
    comfort_weight: float = 10.0  # kWh-equivalent per predicted violation
    switch_limit: int = 1
    step_energy_kwh: float = 0.6
    safety_steps: int = 4
    low_limit: float = 45.0  # heater forced on below this thermostat reading

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.comfort_weight < 0:
            raise ValueError("comfort_weight must be >= 0")
        if self.switch_limit < 0:
            raise ValueError("switch_limit must be >= 0")


def rbc_action(obs, cfg: RbcConfig, prev_action: int) -> int:
    temp = float(_temps(obs)[0])
    if temp < cfg.low_threshold:
        return 1
    if temp > cfg.high_threshold:
        return 0
    return int(prev_action)


def reward(energy_used: float, violations: int, comfort_weight: float) -> float:
    return -float(energy_used) - comfort_weight * violations


class DrawHistory:
    """Per time-of-day slot running totals of observed draws over completed days."""

    def __init__(self, steps_per_day: int):
        self.steps_per_day = steps_per_day
        self.slot_totals = np.zeros(steps_per_day)
        self.days = 0

    def add_day(self, volumes_by_slot) -> None:
        v = np.asarray(volumes_by_slot, dtype=float)
        if v.shape != (self.steps_per_day,):
            raise ValueError("one volume per slot expected")
        self.slot_totals += v
        self.days += 1

    def forecast(self, start_step: int, horizon: int) -> np.ndarray:
        if self.days < 1:
            raise InsufficientHistoryError("forecast needs at least one full day of history")
        slots = (start_step + np.arange(horizon)) % self.steps_per_day
        return self.slot_totals[slots] / self.days


def forecast_draws(history: DrawSeries, steps_per_day: int, horizon: int,
                   start_step: int | None = None, n_days: int | None = None) -> np.ndarray:
    """Mean historical volume for each time-of-day slot of the next ``horizon`` steps.

    The history covers ``n_days`` full days (default: every full day before
    ``start_step``, or the whole series when ``start_step`` is omitted).
    """
    last = int(history.steps[-1]) + 1 if len(history) else 0
    if n_days is None:
        n_days = (start_step if start_step is not None else last) // steps_per_day
        if start_step is None and last % steps_per_day:
            n_days += 1
    if n_days < 1:
        raise InsufficientHistoryError("forecast needs at least one full day of history")
    if start_step is None:
        start_step = n_days * steps_per_day
    hist = DrawHistory(steps_per_day)
    dense = history.dense(n_days * steps_per_day).reshape(n_days, steps_per_day)
    for day in dense:
        hist.add_day(day)
    return hist.forecast(start_step, horizon)


@njit(cache=True)
def _rollout(obs0, tsr0, vsr0, actions, forecast, comfort, tables, flags, lo, hi, cache):
    """Predicted violation flags of a fixed action sequence."""
    k = obs0.shape[0]
    nf = tables[0].shape[0]
    feat = np.empty(nf)
    idx = np.empty(nf, dtype=np.int64)
    cur = obs0.copy()
    nxt = np.empty(k)
    tsr = tsr0
    vsr = vsr0
    viol = np.zeros(actions.shape[0], dtype=np.int64)
    for t in range(actions.shape[0]):
        a = actions[t]
        _predict_one(nxt, cur, a, forecast[t], tsr, vsr, tables, flags, lo, hi, cache, feat, idx)
        if forecast[t] > 0.0 and nxt[k - 1] < comfort:
            viol[t] = 1
        if a != 0:
            tsr = 0.0
            vsr = 0.0
        else:
            tsr += 1.0
            vsr += forecast[t]
        cur[:] = nxt
    return viol


@njit(cache=True)
def _hold_obs(obs0, tsr0, vsr0, action, forecast, steps, tables, flags, lo, hi, cache):
    """Predicted observation after holding ``action`` for ``steps`` steps."""
    k = obs0.shape[0]
    nf = tables[0].shape[0]
    feat = np.empty(nf)
    idx = np.empty(nf, dtype=np.int64)
    cur = obs0.copy()
    nxt = np.empty(k)
    tsr = tsr0
    vsr = vsr0
    for t in range(steps):
        _predict_one(nxt, cur, action, forecast[t], tsr, vsr, tables, flags, lo, hi, cache, feat, idx)
        if action != 0:
            tsr = 0.0
            vsr = 0.0
        else:
            tsr += 1.0
            vsr += forecast[t]
        cur[:] = nxt
    return cur


@njit(cache=True)
def _plan_kernel(obs0, tsr0, vsr0, forecast, horizon, switch_limit, step_energy, weight,
                 comfort, tables, flags, lo, hi, cache):
    k = obs0.shape[0]
    H = horizon
    nf = tables[0].shape[0]
    feat = np.empty(nf)
    idx = np.empty(nf, dtype=np.int64)

    obs = np.empty((H + 1, k))
    obs[0] = obs0
    tsr = np.empty(H + 1)
    vsr = np.empty(H + 1)
    tsr[0] = tsr0
    vsr[0] = vsr0
    n_on = np.zeros(H + 1, dtype=np.int64)
    n_viol = np.zeros(H + 1, dtype=np.int64)
    switches = np.zeros(H + 1, dtype=np.int64)
    act = np.zeros(H, dtype=np.int64)
    choice = np.full(H, -1, dtype=np.int64)

    best = np.array([np.inf, np.inf])
    best_viol = np.zeros(2, dtype=np.int64)
    best_seq = np.zeros((2, H), dtype=np.int64)
    first_pred = np.empty((2, k))
    nodes = 0

    t = 0
    while t >= 0:
        if t == H:
            f = act[0]
            c = n_on[H] * step_energy + weight * n_viol[H]
            if c < best[f]:
                best[f] = c
                best_viol[f] = n_viol[H]
                best_seq[f] = act
            t -= 1
            continue
        c = choice[t] + 1
        # a change of action needs a switch to spare
        while c <= 1 and t > 0 and c != act[t - 1] and switches[t] >= switch_limit:
            c += 1
        if c > 1:
            choice[t] = -1
            t -= 1
            continue
        choice[t] = c
        act[t] = c
        switches[t + 1] = switches[t] + (1 if t > 0 and c != act[t - 1] else 0)
        _predict_one(obs[t + 1], obs[t], c, forecast[t], tsr[t], vsr[t], tables, flags, lo, hi,
                     cache, feat, idx)
        nodes += 1
        if t == 0:
            first_pred[c] = obs[1]
        if c != 0:
            tsr[t + 1] = 0.0
            vsr[t + 1] = 0.0
        else:
            tsr[t + 1] = tsr[t] + 1.0
            vsr[t + 1] = vsr[t] + forecast[t]
        n_on[t + 1] = n_on[t] + c
        v = 1 if (forecast[t] > 0.0 and obs[t + 1, k - 1] < comfort) else 0
        n_viol[t + 1] = n_viol[t] + v
        partial = n_on[t + 1] * step_energy + weight * n_viol[t + 1]
        # off wins ties, so no branch can change the answer once it reaches best[0];
        # within a first action, equal cost keeps the earlier sequence
        if partial >= best[0] or partial >= best[act[0]]:
            continue
        t += 1
    action = 0 if best[0] <= best[1] else 1
    return action, best, best_viol, best_seq, first_pred, nodes


@dataclass(frozen=True)
class PlanResult:
    action: int
    cost: float
    predicted_violations: int
    sequence: np.ndarray
    next_obs: np.ndarray  # (2, k): one-step prediction under off / on
    nodes: int


def plan_detail(model: TransitionModel, obs, forecast, cfg: PlannerConfig,
                agent_memory=(0, 0.0)) -> PlanResult:
    if model.n_populated == 0:
        raise ValueError("model has no populated bins")
    forecast = np.asarray(forecast, dtype=float)
    if forecast.size < cfg.horizon:
        raise ValueError(f"forecast covers {forecast.size} steps, horizon is {cfg.horizon}")
    obs0 = np.ascontiguousarray(_temps(obs), dtype=float)
    tables, flags, lo, hi, cache = model.kernel_args
    a, best, viol, seq, first, nodes = _plan_kernel(
        obs0, float(agent_memory[0]), float(agent_memory[1]),
        np.ascontiguousarray(forecast[: cfg.horizon]), cfg.horizon, cfg.switch_limit,
        cfg.step_energy_kwh, cfg.comfort_weight, cfg.comfort_threshold,
        tables, flags, lo, hi, cache)
    return PlanResult(int(a), float(best[a]), int(viol[a]), seq[a].copy(), first, int(nodes))


def plan(model: TransitionModel, obs, forecast, cfg: PlannerConfig, agent_memory=(0, 0.0)) -> int:
    return plan_detail(model, obs, forecast, cfg, agent_memory).action


def sequence_violations(model: TransitionModel, obs, actions, forecast, cfg: PlannerConfig,
                        agent_memory=(0, 0.0)) -> np.ndarray:
    """Per-step predicted comfort violations of a fixed action sequence."""
    actions = np.ascontiguousarray(actions, dtype=np.int64)
    forecast = np.ascontiguousarray(forecast, dtype=float)[: actions.size]
    tables, flags, lo, hi, cache = model.kernel_args
    return _rollout(np.ascontiguousarray(_temps(obs), dtype=float), float(agent_memory[0]),
                    float(agent_memory[1]), actions, forecast, cfg.comfort_threshold,
                    tables, flags, lo, hi, cache)
