"""Fleet experiments: simulate households day by day under each control strategy.

Strategies
----------
RBC       hysteresis thermostat on the midpoint sensor
SARL_K    per-household model with knowledge, epsilon-greedy exploration
MARL_K    one shared model on pooled data, targeted exploration on pooled counts
SARL_KI   as SARL_K with a sensor array
MARL_KI   as MARL_K with a sensor array

A day is one episode.  Models, visit counts and exploration targets change
only at day boundaries, so households never see each other mid-day.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .config import ExperimentConfig
from .control import DrawHistory, _hold_obs, _plan_kernel, _rollout
from .exploration import (ExplorationPolicy, StateBinning, VisitCounts, assign_targets, bin_of,
                          choose_action, coverage)
from .model_learning import (KnowledgeConfig, TransitionDataset, TransitionModel, evaluate_mae, fit,
                             pool)
from .occupants import generate_draws, make_profile
from .sensing import SensorConfig
from .vessel import KJ_PER_KWH, _step_kernel

STREAMS = {"occupant": 0, "noise": 1, "policy": 2}

SUMMARY_COLUMNS = ("strategy", "n_households", "cumulative_energy_kwh", "violations", "draws",
                   "final_coverage", "final_mae")
DAILY_COLUMNS = ("day", "strategy", "energy_kwh", "violations", "draws", "coverage",
                 "fleet_coverage", "mae")
HOUSEHOLD_COLUMNS = ("strategy", "household_id", "archetype", "cumulative_energy_kwh",
                     "violations", "draws", "coverage")


def derive_seed(master: int, household_id: int, stream: str) -> int:
    """64-bit seed for one household's random stream.

    The master seed is the entropy of a numpy ``SeedSequence`` and
    ``(household_id, stream index)`` its spawn key; the sequence's hash-based
    mixing gives independent, collision-resistant child states.
    """
    if stream not in STREAMS:
        raise ValueError(f"unknown stream {stream!r}; expected one of {sorted(STREAMS)}")
    ss = np.random.SeedSequence(int(master), spawn_key=(int(household_id), STREAMS[stream]))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def heldout_mask(household_id: int, steps, fraction: float) -> np.ndarray:
    """Deterministic held-out membership of (household, step) samples."""
    steps = np.asarray(steps, dtype=np.uint64)
    key = (np.uint64(household_id) << np.uint64(32)) ^ steps
    u = (_splitmix64(key) >> np.uint64(11)).astype(float) / float(1 << 53)
    return u < fraction


@dataclass(frozen=True)
class StrategySpec:
    name: str
    learned: bool
    shared: bool
    sensors: SensorConfig
    exploration: ExplorationPolicy


def strategy_spec(name: str, cfg: ExperimentConfig) -> StrategySpec:
    noise = cfg.sensing.noise_std
    mid = SensorConfig.midpoint(noise)
    arr = SensorConfig.array(cfg.sensing.array_k, noise)
    eps = ExplorationPolicy.eps_greedy(cfg.exploration.sarl_epsilon)
    tgt = ExplorationPolicy.targeted(cfg.exploration.marl_bonus_weight)
    table = {
        "RBC": StrategySpec("RBC", False, False, mid, ExplorationPolicy.none()),
        "SARL_K": StrategySpec("SARL_K", True, False, mid, eps),
        "MARL_K": StrategySpec("MARL_K", True, True, mid, tgt),
        "SARL_KI": StrategySpec("SARL_KI", True, False, arr, eps),
        "MARL_KI": StrategySpec("MARL_KI", True, True, arr, tgt),
    }
    return table[name]


@njit(cache=True)
def _read_sensors(temps, idx, noise, lo, hi, out):
    for j in range(idx.shape[0]):
        out[j] = min(max(temps[idx[j]] + noise[j], lo), hi)


class _CombinedCounts:
    """Read-only view of pooled counts plus an agent's visits since the last boundary."""

    __slots__ = ("pooled", "today")

    def __init__(self, pooled: VisitCounts, today: Counter):
        self.pooled = pooled
        self.today = today

    def __getitem__(self, b):
        return self.pooled[b] + self.today.get(b, 0)


class _Household:
    def __init__(self, hid, archetype, cfg: ExperimentConfig, spec: StrategySpec):
        v = cfg.vessel
        spd = v.steps_per_day
        n_steps = cfg.n_days * spd
        self.hid = hid
        self.archetype = archetype
        occ = derive_seed(cfg.seed, hid, "occupant")
        profile = make_profile(archetype, hid, occ, steps_per_day=spd)
        if cfg.intensity_scale != 1.0:
            profile = dataclasses.replace(
                profile, base_intensity=np.clip(profile.base_intensity * cfg.intensity_scale, 0.0, 1.0))
        self.draws_series = generate_draws(profile, cfg.n_days, occ, max_volume=v.volume_total)
        self.draws = self.draws_series.dense(n_steps)
        self.sensor_idx = spec.sensors.layer_indices(v.n_layers)
        k = self.sensor_idx.size
        noise_rng = np.random.default_rng(derive_seed(cfg.seed, hid, "noise"))
        self.noise = noise_rng.normal(0.0, spec.sensors.noise_std, size=(n_steps + 1, k))
        self.rng = np.random.default_rng(derive_seed(cfg.seed, hid, "policy"))
        # the thermostat reads the sensor nearest the vessel midpoint
        self.thermo = int(np.argmin(np.abs(self.sensor_idx - v.n_layers // 2)))

        self.temps = np.full(v.n_layers, float(cfg.initial_temp))
        self.obs = np.empty((n_steps + 1, k))
        self.actions = np.zeros(n_steps, dtype=np.int64)
        self.tsr = np.zeros(n_steps)
        self.vsr = np.zeros(n_steps)
        self.energy = np.zeros(n_steps)
        self.violation = np.zeros(n_steps, dtype=np.int64)
        self.heldout = heldout_mask(hid, np.arange(n_steps), cfg.heldout_fraction)
        self.history = DrawHistory(spd)
        self.counts = VisitCounts()
        self.today = Counter()
        self.targets = frozenset()
        self.model = None
        self.prev_action = 0
        self.mem = (0.0, 0.0)
        self._read(0, cfg)

    def _read(self, t, cfg):
        _read_sensors(self.temps, self.sensor_idx, self.noise[t], cfg.vessel.inlet_temp,
                      cfg.vessel.max_temp, self.obs[t])

    def dataset(self, end: int, heldout: bool) -> TransitionDataset:
        sel = self.heldout[:end] if heldout else ~self.heldout[:end]
        idx = np.flatnonzero(sel)
        return TransitionDataset(self.obs[idx], self.actions[idx], self.draws[idx], self.tsr[idx],
                                 self.vsr[idx], self.obs[idx + 1],
                                 np.full(idx.size, self.hid, dtype=np.int64), idx)

    def all_transitions(self, end: int) -> TransitionDataset:
        idx = np.arange(end)
        return TransitionDataset(self.obs[idx], self.actions[idx], self.draws[idx], self.tsr[idx],
                                 self.vsr[idx], self.obs[idx + 1],
                                 np.full(end, self.hid, dtype=np.int64), idx)


@dataclass
class StrategyResult:
    strategy: str
    n_households: int
    n_days: int
    warmup_days: int
    archetypes: list
    energy: np.ndarray  # (n_days, n_households) kWh
    violations: np.ndarray  # (n_days, n_households)
    draws: np.ndarray  # (n_days, n_households) draw events
    coverage: np.ndarray  # (n_days,) strategy-native coverage after each day
    fleet_coverage: np.ndarray  # (n_days,) union over households
    household_coverage: np.ndarray  # (n_days, n_households)
    mae: np.ndarray  # (n_days,) nan before the first model
    models: dict = field(default_factory=dict, repr=False)  # household id (or -1 shared) -> model
    heldout: dict = field(default_factory=dict, repr=False)  # household id -> dataset
    transitions: dict = field(default_factory=dict, repr=False)
    pooled_samples: int = 0
    plan_nodes: int = 0

    @property
    def eval_slice(self) -> slice:
        return slice(min(self.warmup_days, self.n_days), self.n_days)

    @property
    def cumulative_energy(self) -> float:
        return float(self.energy[self.eval_slice].sum())

    @property
    def total_violations(self) -> int:
        return int(self.violations[self.eval_slice].sum())

    @property
    def total_draws(self) -> int:
        return int(self.draws[self.eval_slice].sum())

    @property
    def final_coverage(self) -> float:
        return float(self.coverage[-1]) if self.coverage.size else 0.0

    @property
    def final_mae(self) -> float:
        return float(self.mae[-1]) if self.mae.size else float("nan")

    def household_energy(self) -> np.ndarray:
        return self.energy[self.eval_slice].sum(axis=0)

    def household_violations(self) -> np.ndarray:
        return self.violations[self.eval_slice].sum(axis=0)


@dataclass
class MetricsReport:
    config: ExperimentConfig
    results: dict  # strategy name -> StrategyResult

    @property
    def strategies(self) -> list:
        return list(self.results)

    def __getitem__(self, name) -> StrategyResult:
        return self.results[name]


def _fit_models(spec, cfg, households, end, knowledge):
    train = [h.dataset(end, heldout=False) for h in households]
    if spec.shared or not spec.learned:
        pooled = pool(train).canonical()
        if len(pooled) == 0:
            return {}
        model = fit(pooled, knowledge, cfg.binning)
        return {h.hid: model for h in households}
    return {h.hid: fit(d, knowledge, cfg.binning) for h, d in zip(households, train) if len(d)}


def _mae(spec, households, models, end):
    errs = []
    if spec.shared or not spec.learned:
        held = pool([h.dataset(end, heldout=True) for h in households])
        model = next(iter(models.values()), None)
        if model is None or len(held) == 0:
            return float("nan")
        return evaluate_mae(model, held)
    for h in households:
        held = h.dataset(end, heldout=True)
        if h.hid in models and len(held):
            errs.append(evaluate_mae(models[h.hid], held))
    return float(np.mean(errs)) if errs else float("nan")


def _simulate_day(h: _Household, day: int, cfg: ExperimentConfig, spec: StrategySpec,
                  sbin: StateBinning, pooled: VisitCounts, forecast_ext, stats) -> None:
    v = cfg.vessel
    pc = cfg.planner
    spd = v.steps_per_day
    H = pc.horizon
    lo, hi = float(v.inlet_temp), float(v.max_temp)
    layer_volume, cap = v.layer_volume, v.layer_capacity
    r, loss = v.cond_fraction, v.loss_fraction
    rbc_low, rbc_high = cfg.rbc.low_threshold, cfg.rbc.high_threshold
    comfort = cfg.comfort_threshold
    policy = spec.exploration
    model = h.model
    if model is not None:
        tables, flags, klo, khi, kcache = model.kernel_args
        view = _CombinedCounts(pooled if policy.shared_counts else h.counts, h.today)
        safety = max(1, min(pc.safety_steps, H))
        look = max(1, min(cfg.exploration.lookahead_steps, H))
    tsr, vsr = h.mem
    temps = h.temps
    for s in range(spd):
        t = day * spd + s
        o = h.obs[t]
        b = bin_of(o, sbin)
        h.today[b] += 1
        x = o[h.thermo]
        if model is None:
            a = 1 if x < rbc_low else (0 if x > rbc_high else h.prev_action)
        elif x < pc.low_limit:
            a = 1
        else:
            fc = forecast_ext[s: s + H]
            g, best, viol, seq, first, nodes = _plan_kernel(
                o, tsr, vsr, fc, H, pc.switch_limit, pc.step_energy_kwh, pc.comfort_weight,
                comfort, tables, flags, klo, khi, kcache)
            stats[0] += nodes
            if policy.kind == "targeted":
                cand = (_hold_obs(o, tsr, vsr, 0, fc, look, tables, flags, klo, khi, kcache),
                        _hold_obs(o, tsr, vsr, 1, fc, look, tables, flags, klo, khi, kcache))
            else:
                cand = (first[0], first[1])
            a = choose_action(policy, g, cand, sbin, h.rng, view, h.targets)
            if a != g:
                # explore only if the non-greedy first step, followed by the greedy
                # plan, is predicted to stay comfortable over the safety window
                alt = seq[g, :safety].copy()
                alt[0] = a
                if _rollout(o, tsr, vsr, alt, fc[:safety], comfort, tables, flags, klo, khi,
                            kcache).any():
                    a = g
        draw = h.draws[t]
        q, delivered, _ = _step_kernel(temps, layer_volume, lo, v.ambient_temp, hi, v.heater_layer,
                                       v.heater_power, v.dt, cap, r, loss, a, draw)
        h.actions[t] = a
        h.tsr[t] = tsr
        h.vsr[t] = vsr
        h.energy[t] = q / KJ_PER_KWH
        if draw > 0.0 and delivered < comfort:
            h.violation[t] = 1
        if a:
            tsr, vsr = 0.0, 0.0
        else:
            tsr, vsr = tsr + 1.0, vsr + draw
        h.prev_action = a
        h._read(t + 1, cfg)
    h.mem = (tsr, vsr)


def run_strategy(cfg: ExperimentConfig, name: str, keep_transitions: bool = False) -> StrategyResult:
    spec = strategy_spec(name, cfg)
    v = cfg.vessel
    spd = v.steps_per_day
    n, n_days = cfg.n_households, cfg.n_days
    k = spec.sensors.k
    households = [_Household(i, cfg.archetypes[i % len(cfg.archetypes)], cfg, spec) for i in range(n)]
    order = households if cfg.iteration_order == "forward" else households[::-1]
    sbin = StateBinning(cfg.binning.temp_width, cfg.binning.temp_max, k, cfg.binning.volume_edges)
    knowledge = KnowledgeConfig.full(v.inlet_temp, v.max_temp)
    pooled = VisitCounts()
    H = cfg.planner.horizon

    res = StrategyResult(
        strategy=name, n_households=n, n_days=n_days, warmup_days=cfg.warmup_days,
        archetypes=[h.archetype for h in households],
        energy=np.zeros((n_days, n)), violations=np.zeros((n_days, n), dtype=np.int64),
        draws=np.zeros((n_days, n), dtype=np.int64), coverage=np.zeros(n_days),
        fleet_coverage=np.zeros(n_days), household_coverage=np.zeros((n_days, n)),
        mae=np.full(n_days, np.nan),
    )
    stats = [0]
    models = {}
    for day in range(n_days):
        for h in order:
            fc_ext = None
            if h.model is not None:
                prof = h.history.slot_totals / h.history.days
                reps = 1 + math.ceil(H / spd)
                fc_ext = np.ascontiguousarray(np.tile(prof, reps))
            _simulate_day(h, day, cfg, spec, sbin, pooled, fc_ext, stats)

        # day boundary: the only point where households exchange anything
        sl = slice(day * spd, (day + 1) * spd)
        end = (day + 1) * spd
        for h in households:
            h.history.add_day(h.draws[sl])
            h.counts.counts.update(h.today)
            pooled.counts.update(h.today)
            h.today = Counter()
            res.energy[day, h.hid] = h.energy[sl].sum()
            res.violations[day, h.hid] = h.violation[sl].sum()
            res.draws[day, h.hid] = int(np.count_nonzero(h.draws[sl]))
            res.household_coverage[day, h.hid] = coverage(h.counts, sbin)
        res.fleet_coverage[day] = coverage(pooled, sbin)
        res.coverage[day] = (res.fleet_coverage[day] if spec.shared
                             else res.household_coverage[day].mean())

        if (day + 1) % cfg.model_refresh_period == 0:
            models = _fit_models(spec, cfg, households, end, knowledge)
            if spec.learned:
                for h in households:
                    h.model = models.get(h.hid)
            if spec.shared and spec.exploration.kind == "targeted":
                for h, tg in zip(households, assign_targets(pooled, sbin, n)):
                    h.targets = frozenset(tg)
        if models:
            res.mae[day] = _mae(spec, households, models, end)

    end = n_days * spd
    if spec.shared or not spec.learned:
        shared = next(iter(models.values()), None)
        res.models = {-1: shared} if shared is not None else {}
    else:
        res.models = dict(models)
    res.heldout = {h.hid: h.dataset(end, heldout=True) for h in households}
    res.pooled_samples = sum(len(h.dataset(end, heldout=False)) for h in households)
    res.plan_nodes = stats[0]
    if keep_transitions:
        res.transitions = {h.hid: h.all_transitions(end) for h in households}
    return res


def run_experiment(cfg: ExperimentConfig, keep_transitions: bool = False) -> MetricsReport:
    return MetricsReport(cfg, {name: run_strategy(cfg, name, keep_transitions)
                               for name in cfg.strategies})


# --------------------------------------------------------------------------- output


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.6g}"


def _write_rows(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def summary_rows(report: MetricsReport):
    for name, r in report.results.items():
        yield [name, r.n_households, fmt(r.cumulative_energy), r.total_violations, r.total_draws,
               fmt(r.final_coverage), fmt(r.final_mae)]


def daily_rows(report: MetricsReport):
    for name, r in report.results.items():
        for d in range(r.n_days):
            yield [d, name, fmt(r.energy[d].sum()), int(r.violations[d].sum()), int(r.draws[d].sum()),
                   fmt(r.coverage[d]), fmt(r.fleet_coverage[d]), fmt(r.mae[d])]


def household_rows(report: MetricsReport):
    for name, r in report.results.items():
        e, vi = r.household_energy(), r.household_violations()
        dr = r.draws[r.eval_slice].sum(axis=0)
        for i in range(r.n_households):
            yield [name, i, r.archetypes[i], fmt(e[i]), int(vi[i]), int(dr[i]),
                   fmt(r.household_coverage[-1, i])]


def write_report(report: MetricsReport, out_dir, transitions: bool = False) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    for fname, header, rows in (("summary.csv", SUMMARY_COLUMNS, summary_rows(report)),
                                ("daily.csv", DAILY_COLUMNS, daily_rows(report)),
                                ("households.csv", HOUSEHOLD_COLUMNS, household_rows(report))):
        _write_rows(out / fname, header, rows)
        written.append(out / fname)
    if transitions:
        for name, r in report.results.items():
            sub = out / "transitions" / name
            sub.mkdir(parents=True, exist_ok=True)
            for hid, ds in sorted(r.transitions.items()):
                path = sub / f"transitions_{hid}.csv"
                ds.to_csv(path)
                written.append(path)
    return written
