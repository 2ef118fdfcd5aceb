"""Binned-mean transition models learned from sensor logs.

A model maps a feature vector (sensor temperatures, action, draw volume and,
with engineered features, time/volume since the last reheat and the mean
sensor temperature) to a bin and predicts ``obs + mean(next_obs - obs)`` over
the training samples in that bin.  Queries landing in an empty bin borrow the
nearest populated bin: same action first, then the closest draw class, then
L1 distance over the remaining bin indices, lowest flat id on ties.

Predictions can be projected onto simple thermodynamic constraints: endpoint
clamping, a non-decreasing bottom-to-top profile and no warming in standby.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .isotonic import pava_inplace
from .sensing import Observation

N_ENGINEERED = 3
_UNIT = np.ones(64)


class EmptyDatasetError(ValueError):
    pass


class SensorCountMismatch(ValueError):
    pass


@dataclass(frozen=True)
class KnowledgeConfig:
    enabled: bool = False
    engineered_features: bool = False
    endpoint_clamp: bool = False
    monotone_profile: bool = False
    standby_non_increasing: bool = False
    inlet_temp: float = 10.0
    max_temp: float = 90.0

    def __post_init__(self):
        if not self.enabled and (self.engineered_features or self.any_constraint):
            raise ValueError("knowledge features and constraints require enabled=True")

    @property
    def any_constraint(self) -> bool:
        return self.endpoint_clamp or self.monotone_profile or self.standby_non_increasing

    @classmethod
    def full(cls, inlet_temp: float = 10.0, max_temp: float = 90.0) -> "KnowledgeConfig":
        return cls(True, True, True, True, True, inlet_temp, max_temp)

    @classmethod
    def none(cls) -> "KnowledgeConfig":
        return cls()

    def flags(self):
        return (int(self.engineered_features), int(self.endpoint_clamp),
                int(self.monotone_profile), int(self.standby_non_increasing))


def update_memory(memory, action, draw_volume):
    """(steps since reheat, litres drawn since reheat) after one step."""
    if action:
        return (0, 0.0)
    return (memory[0] + 1, memory[1] + float(draw_volume))


def _temps(obs) -> np.ndarray:
    if isinstance(obs, Observation):
        return np.asarray(obs.sensor_temps, dtype=float)
    return np.atleast_1d(np.asarray(obs, dtype=float))


def featurize(obs, action, draw_volume, knowledge: KnowledgeConfig, agent_memory=(0, 0.0)) -> np.ndarray:
    temps = _temps(obs)
    base = [*temps, float(action), float(draw_volume)]
    if knowledge.engineered_features:
        base += [float(agent_memory[0]), float(agent_memory[1]), float(temps.mean())]
    return np.array(base)


# --------------------------------------------------------------------------- data


@dataclass(frozen=True)
class TransitionSample:
    obs: Observation
    action: int
    draw_volume: float
    next_obs: Observation
    household_id: int = 0
    step: int = 0
    memory: tuple = (0, 0.0)

    def __post_init__(self):
        for name in ("obs", "next_obs"):
            v = getattr(self, name)
            if not isinstance(v, Observation):
                object.__setattr__(self, name, Observation(tuple(np.atleast_1d(v))))
        if len(self.obs) != len(self.next_obs):
            raise SensorCountMismatch("obs and next_obs must have the same sensor count")


class TransitionDataset:
    """Column store of transition samples with a common sensor count."""

    COLUMNS = ("household_id", "step", "action", "draw_volume", "time_since_reheat", "vol_since_reheat")

    def __init__(self, obs, action, draw, tsr, vsr, next_obs, household=None, step=None):
        self.obs = np.atleast_2d(np.asarray(obs, dtype=float))
        n = self.obs.shape[0]
        nxt = np.asarray(next_obs, dtype=float)
        self.next_obs = nxt.reshape(n, -1) if n else nxt.reshape(0, nxt.shape[-1] if nxt.ndim == 2 else 0)
        if self.next_obs.shape != self.obs.shape:
            raise SensorCountMismatch("obs and next_obs must have the same sensor count")
        self.action = np.asarray(action, dtype=np.int64).reshape(n)
        self.draw = np.asarray(draw, dtype=float).reshape(n)
        self.tsr = np.asarray(tsr, dtype=float).reshape(n)
        self.vsr = np.asarray(vsr, dtype=float).reshape(n)
        self.household = (np.zeros(n, dtype=np.int64) if household is None
                          else np.asarray(household, dtype=np.int64).reshape(n))
        self.step = (np.arange(n, dtype=np.int64) if step is None
                     else np.asarray(step, dtype=np.int64).reshape(n))

    @classmethod
    def empty(cls, sensor_count: int) -> "TransitionDataset":
        z = np.zeros(0)
        return cls(np.zeros((0, sensor_count)), z, z, z, z, np.zeros((0, sensor_count)))

    @classmethod
    def from_samples(cls, samples, sensor_count: int | None = None) -> "TransitionDataset":
        samples = list(samples)
        if not samples:
            if sensor_count is None:
                raise EmptyDatasetError("sensor_count is required for an empty dataset")
            return cls.empty(sensor_count)
        counts = {len(s.obs) for s in samples}
        if len(counts) != 1 or (sensor_count is not None and counts != {sensor_count}):
            raise SensorCountMismatch(f"mixed sensor counts {sorted(counts)}")
        return cls(
            [s.obs.sensor_temps for s in samples],
            [int(s.action) for s in samples],
            [s.draw_volume for s in samples],
            [s.memory[0] for s in samples],
            [s.memory[1] for s in samples],
            [s.next_obs.sensor_temps for s in samples],
            [s.household_id for s in samples],
            [s.step for s in samples],
        )

    def __len__(self):
        return int(self.obs.shape[0])

    @property
    def sensor_count(self) -> int:
        return int(self.obs.shape[1])

    @property
    def samples(self) -> list[TransitionSample]:
        return [
            TransitionSample(
                Observation(tuple(self.obs[i]), int(self.step[i])), int(self.action[i]),
                float(self.draw[i]), Observation(tuple(self.next_obs[i]), int(self.step[i]) + 1),
                int(self.household[i]), int(self.step[i]),
                (int(self.tsr[i]), float(self.vsr[i])),
            )
            for i in range(len(self))
        ]

    def subset(self, mask) -> "TransitionDataset":
        return TransitionDataset(self.obs[mask], self.action[mask], self.draw[mask], self.tsr[mask],
                                 self.vsr[mask], self.next_obs[mask], self.household[mask], self.step[mask])

    def canonical(self) -> "TransitionDataset":
        """Same samples ordered by (household, step)."""
        return self.subset(np.lexsort((self.step, self.household)))

    def features(self, knowledge: KnowledgeConfig) -> np.ndarray:
        cols = [self.obs, self.action[:, None].astype(float), self.draw[:, None]]
        if knowledge.engineered_features:
            cols += [self.tsr[:, None], self.vsr[:, None], self.obs.mean(axis=1, keepdims=True)]
        return np.hstack(cols)

    def to_csv(self, path) -> None:
        k = self.sensor_count
        header = (["household_id", "step"] + [f"obs_{j}" for j in range(k)]
                  + ["action", "draw_volume", "time_since_reheat", "vol_since_reheat"]
                  + [f"next_obs_{j}" for j in range(k)])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self)):
                w.writerow([int(self.household[i]), int(self.step[i])]
                           + [f"{v:.6g}" for v in self.obs[i]]
                           + [int(self.action[i]), f"{self.draw[i]:.6g}", int(self.tsr[i]), f"{self.vsr[i]:.6g}"]
                           + [f"{v:.6g}" for v in self.next_obs[i]])

    @classmethod
    def from_csv(cls, path) -> "TransitionDataset":
        with open(Path(path), newline="") as fh:
            reader = csv.DictReader(fh)
            k = sum(1 for c in reader.fieldnames if c.startswith("obs_"))
            rows = list(reader)
        if not rows:
            return cls.empty(k)
        col = lambda name, t=float: np.array([t(r[name]) for r in rows])  # noqa: E731
        return cls(
            np.column_stack([col(f"obs_{j}") for j in range(k)]),
            col("action", int), col("draw_volume"), col("time_since_reheat"), col("vol_since_reheat"),
            np.column_stack([col(f"next_obs_{j}") for j in range(k)]),
            col("household_id", int), col("step", int),
        )


def pool(datasets) -> TransitionDataset:
    """Concatenate datasets, keeping each sample's household id."""
    datasets = list(datasets)
    if not datasets:
        raise EmptyDatasetError("nothing to pool")
    counts = {d.sensor_count for d in datasets}
    if len(counts) != 1:
        raise SensorCountMismatch(f"cannot pool datasets with sensor counts {sorted(counts)}")
    if len(datasets) == 1:
        return datasets[0]
    cat = lambda name: np.concatenate([getattr(d, name) for d in datasets])  # noqa: E731
    return TransitionDataset(cat("obs"), cat("action"), cat("draw"), cat("tsr"), cat("vsr"),
                             cat("next_obs"), cat("household"), cat("step"))


# --------------------------------------------------------------------------- binning


@dataclass(frozen=True)
class FeatureBinning:
    """Fixed per-feature bin edges.

    ``lower_inclusive[j]`` selects ``[e_i, e_{i+1})`` bins; otherwise bins are
    ``(e_i, e_{i+1}]``.  Feature ``j`` has ``len(edges[j]) + 1`` bins.
    """

    edges: tuple
    lower_inclusive: tuple

    def __post_init__(self):
        edges = tuple(np.asarray(e, dtype=float).ravel() for e in self.edges)
        for e in edges:
            if e.size and np.any(np.diff(e) < 0):
                raise ValueError("bin edges must be sorted")
        if len(self.lower_inclusive) != len(edges):
            raise ValueError("one inclusivity flag per feature")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "lower_inclusive", tuple(bool(b) for b in self.lower_inclusive))

    @property
    def n_features(self) -> int:
        return len(self.edges)

    @property
    def dims(self) -> tuple:
        return tuple(e.size + 1 for e in self.edges)

    @property
    def total_bins(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def index(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        out = np.empty(x.shape, dtype=np.int64)
        for j, (e, low) in enumerate(zip(self.edges, self.lower_inclusive)):
            out[:, j] = np.searchsorted(e, x[:, j], side="right" if low else "left")
        return out

    def flat(self, idx) -> np.ndarray:
        return np.ravel_multi_index(np.asarray(idx, dtype=np.int64).T, self.dims)

    def arrays(self):
        width = max(1, max(e.size for e in self.edges))
        edges = np.full((self.n_features, width), np.inf)
        for j, e in enumerate(self.edges):
            edges[j, : e.size] = e
        n_edges = np.array([e.size for e in self.edges], dtype=np.int64)
        lower = np.array(self.lower_inclusive, dtype=np.int64)
        strides = np.ones(self.n_features, dtype=np.int64)
        dims = self.dims
        for j in range(self.n_features - 2, -1, -1):
            strides[j] = strides[j + 1] * dims[j + 1]
        return edges, n_edges, lower, strides


@dataclass(frozen=True)
class BinningSpec:
    """Recipe for a :class:`FeatureBinning`; quantile edges are taken from training data."""

    temp_width: float = 5.0
    temp_max: float = 90.0
    volume_edges: tuple = (0.0, 10.0, 30.0)
    n_quantiles: int = 4

    def temp_edges(self) -> np.ndarray:
        n = int(np.ceil(self.temp_max / self.temp_width))
        return self.temp_width * np.arange(1, n)

    def resolve(self, features: np.ndarray, sensor_count: int, knowledge: KnowledgeConfig) -> FeatureBinning:
        t = self.temp_edges()
        edges = [t] * sensor_count + [np.array([0.5]), np.asarray(self.volume_edges, dtype=float)]
        lower = [True] * sensor_count + [True, False]
        if knowledge.engineered_features:
            qs = np.arange(1, self.n_quantiles) / self.n_quantiles
            for j in range(sensor_count + 2, sensor_count + 2 + N_ENGINEERED):
                col = features[:, j] if len(features) else np.zeros(1)
                edges.append(np.quantile(col, qs))
                lower.append(True)
        return FeatureBinning(tuple(edges), tuple(lower))


# --------------------------------------------------------------------------- kernels


@njit(cache=True, inline="always")
def _bin_row(feat, edges, n_edges, lower, strides, idx):
    fid = 0
    for j in range(feat.shape[0]):
        x = feat[j]
        b = 0
        for e in range(n_edges[j]):
            edge = edges[j, e]
            if x > edge or (lower[j] == 1 and x == edge):
                b += 1
            else:
                break
        idx[j] = b
        fid += b * strides[j]
    return fid


_HASH_MULT = 0x9E3779B1


def _new_cache(bin_ids):
    """Open-addressing table ``flat id -> populated row``.

    Populated bins are inserted up front; empty-bin queries add their nearest
    populated row lazily while the table is at most half full.
    """
    slots = 1 << max(14, int(4 * max(1, bin_ids.size) - 1).bit_length())
    keys = np.full(slots, -1, dtype=np.int64)
    vals = np.empty(slots, dtype=np.int64)
    used = np.zeros(1, dtype=np.int64)
    _fill_cache(bin_ids, keys, vals, used)
    return keys, vals, used


@njit(cache=True)
def _fill_cache(bin_ids, keys, vals, used):
    mask = keys.shape[0] - 1
    for r in range(bin_ids.shape[0]):
        h = (bin_ids[r] * _HASH_MULT) & mask
        while keys[h] != -1:
            h = (h + 1) & mask
        keys[h] = bin_ids[r]
        vals[h] = r
        used[0] += 1


@njit(cache=True, inline="always")
def _nearest(idx, pop_idx, dim_weight):
    best = -1
    best_d = 1 << 62
    for p in range(pop_idx.shape[0]):
        d = 0
        for j in range(idx.shape[0]):
            d += abs(pop_idx[p, j] - idx[j]) * dim_weight[j]
        if d < best_d:  # strict: rows are sorted by flat id, so ties keep the lowest id
            best_d = d
            best = p
    return best


@njit(cache=True, inline="always")
def _lookup(fid, idx, pop_idx, dim_weight, cache):
    """Row of the populated bin used for ``fid``; nearest populated bin if empty."""
    keys, vals, used = cache
    mask = keys.shape[0] - 1
    h = (fid * _HASH_MULT) & mask
    while keys[h] != -1:
        if keys[h] == fid:
            return vals[h]
        h = (h + 1) & mask
    best = _nearest(idx, pop_idx, dim_weight)
    if 2 * used[0] < keys.shape[0]:
        keys[h] = fid
        vals[h] = best
        used[0] += 1
    return best


@njit(cache=True, inline="always")
def _project(pred, prev, action, clamp, mono, standby, lo, hi):
    k = pred.shape[0]
    if clamp:
        for i in range(k):
            pred[i] = min(max(pred[i], lo), hi)
    if mono and k >= 2:
        pava_inplace(pred, _UNIT[:k])
    if standby and action == 0:
        # with the monotone constraint the cap is the suffix minimum of prev,
        # the largest non-decreasing sequence below it
        cap = np.inf
        for i in range(k - 1, -1, -1):
            cap = min(cap, prev[i]) if mono else prev[i]
            pred[i] = min(pred[i], cap)
        if clamp:
            for i in range(k):
                pred[i] = min(max(pred[i], lo), hi)


@njit(cache=True, inline="always")
def _featurize_into(feat, obs, action, draw, tsr, vsr, engineered):
    k = obs.shape[0]
    s = 0.0
    for j in range(k):
        feat[j] = obs[j]
        s += obs[j]
    feat[k] = action
    feat[k + 1] = draw
    if engineered:
        feat[k + 2] = tsr
        feat[k + 3] = vsr
        feat[k + 4] = s / k


@njit(cache=True, inline="always")
def _predict_one(out, obs, action, draw, tsr, vsr, tables, flags, lo, hi, cache, feat, idx):
    edges, n_edges, lower, strides, dim_weight, pop_ids, pop_idx, mean_delta = tables
    engineered, clamp, mono, standby = flags
    _featurize_into(feat, obs, action, draw, tsr, vsr, engineered)
    fid = _bin_row(feat, edges, n_edges, lower, strides, idx)
    r = _lookup(fid, idx, pop_idx, dim_weight, cache)
    for j in range(obs.shape[0]):
        out[j] = obs[j] + mean_delta[r, j]
    if clamp or mono or standby:
        _project(out, obs, action, clamp, mono, standby, lo, hi)


@njit(cache=True)
def _predict_rows(obs, action, draw, tsr, vsr, tables, flags, lo, hi, cache):
    n, k = obs.shape
    nf = tables[0].shape[0]
    feat = np.empty(nf)
    idx = np.empty(nf, dtype=np.int64)
    out = np.empty((n, k))
    for i in range(n):
        _predict_one(out[i], obs[i], action[i], draw[i], tsr[i], vsr[i], tables, flags, lo, hi,
                     cache, feat, idx)
    return out


# --------------------------------------------------------------------------- model


@dataclass(frozen=True, eq=False)
class TransitionModel:
    binning: FeatureBinning
    knowledge: KnowledgeConfig
    sensor_count: int
    bin_ids: np.ndarray  # sorted flat ids of populated bins
    counts: np.ndarray
    mean_delta: np.ndarray  # (n_bins, sensor_count)
    _cache: object = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(self.counts < 1):
            raise ValueError("every stored bin must hold at least one sample")
        object.__setattr__(self, "_cache", _new_cache(self.bin_ids))
        idx = np.array(np.unravel_index(self.bin_ids, self.binning.dims), dtype=np.int64).T
        # a mismatched action outweighs any draw-class distance, which in turn
        # outweighs any distance over the remaining features
        weight = np.ones(self.binning.n_features, dtype=np.int64)
        dims = self.binning.dims
        k = self.sensor_count
        if self.binning.n_features >= k + 2:
            rest = sum(d - 1 for j, d in enumerate(dims) if j not in (k, k + 1)) + 1
            weight[k + 1] = rest
            weight[k] = rest * dims[k + 1]
        object.__setattr__(self, "_tables", (*self.binning.arrays(), weight, self.bin_ids,
                                             idx.reshape(-1, self.binning.n_features), self.mean_delta))

    @property
    def n_populated(self) -> int:
        return int(self.bin_ids.size)

    @property
    def bin_stats(self) -> dict:
        return {int(b): (int(c), tuple(float(x) for x in d))
                for b, c, d in zip(self.bin_ids, self.counts, self.mean_delta)}

    @property
    def kernel_args(self):
        kn = self.knowledge
        return self._tables, self.knowledge.flags(), float(kn.inlet_temp), float(kn.max_temp), self._cache

    def predict_batch(self, obs, action, draw, tsr, vsr) -> np.ndarray:
        if self.n_populated == 0:
            raise EmptyDatasetError("model has no populated bins")
        obs = np.ascontiguousarray(np.atleast_2d(obs), dtype=float)
        n = obs.shape[0]
        as_arr = lambda v, t=float: np.ascontiguousarray(np.broadcast_to(np.asarray(v, dtype=t), (n,)))  # noqa: E731
        tables, flags, lo, hi, cache = self.kernel_args
        return _predict_rows(obs, as_arr(action, np.int64), as_arr(draw), as_arr(tsr), as_arr(vsr),
                             tables, flags, lo, hi, cache)

    def summary(self) -> str:
        lines = [
            f"sensor_count: {self.sensor_count}",
            f"features: {self.binning.n_features}",
            f"total_bins: {self.binning.total_bins}",
            f"populated_bins: {self.n_populated}",
            f"samples: {int(self.counts.sum())}",
            "bin_id count mean_delta",
        ]
        for b, c, d in zip(self.bin_ids, self.counts, self.mean_delta):
            lines.append(f"{int(b)} {int(c)} " + " ".join(f"{x:.6g}" for x in d))
        return "\n".join(lines) + "\n"


def fit(dataset: TransitionDataset, knowledge: KnowledgeConfig, binning=None) -> TransitionModel:
    """Per-bin sample count and mean ``next_obs - obs``.

    ``binning`` is a fixed :class:`FeatureBinning` or a :class:`BinningSpec`
    whose quantile edges are computed from ``dataset``.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot fit on an empty dataset")
    feats = dataset.features(knowledge)
    if binning is None:
        binning = BinningSpec()
    if isinstance(binning, BinningSpec):
        binning = binning.resolve(feats, dataset.sensor_count, knowledge)
    fid = binning.flat(binning.index(feats))
    delta = dataset.next_obs - dataset.obs
    # canonical order makes the per-bin sums independent of sample order
    keys = tuple(delta[:, j] for j in range(delta.shape[1] - 1, -1, -1)) + (fid,)
    order = np.lexsort(keys)
    fid, delta = fid[order], delta[order]
    ids, start, counts = np.unique(fid, return_index=True, return_counts=True)
    sums = np.add.reduceat(delta, start, axis=0)
    return TransitionModel(binning, knowledge, dataset.sensor_count, ids.astype(np.int64),
                           counts.astype(np.int64), sums / counts[:, None])


def predict(model: TransitionModel, obs, action, draw_volume, agent_memory=(0, 0.0)) -> Observation:
    temps = _temps(obs)
    if temps.size != model.sensor_count:
        raise SensorCountMismatch(f"model expects {model.sensor_count} sensors, got {temps.size}")
    out = model.predict_batch(temps[None, :], int(action), draw_volume, agent_memory[0], agent_memory[1])
    step = obs.step_index + 1 if isinstance(obs, Observation) else 0
    return Observation(tuple(out[0]), step)


def project_constraints(pred, knowledge: KnowledgeConfig, context) -> np.ndarray:
    """Apply the enabled constraints; ``context`` is (action, prev_obs, inlet_temp, max_temp).

    Order: clamp to the endpoints, isotonic projection, then cap at the
    previous reading in standby.  With the monotone constraint the standby
    cap is the suffix minimum of the previous reading so the result stays
    monotone; the output satisfies every enabled constraint and a second
    application leaves it unchanged.
    """
    action, prev, lo, hi = context
    out = np.array(_temps(pred), dtype=float)
    if not knowledge.enabled:
        return out
    prev_t = np.array(_temps(prev), dtype=float) if prev is not None else out.copy()
    _project(out, prev_t, int(action), knowledge.endpoint_clamp, knowledge.monotone_profile,
             knowledge.standby_non_increasing, float(lo), float(hi))
    return out


def evaluate_mae(model: TransitionModel, heldout: TransitionDataset) -> float:
    if len(heldout) == 0:
        raise EmptyDatasetError("held-out set is empty")
    pred = model.predict_batch(heldout.obs, heldout.action, heldout.draw, heldout.tsr, heldout.vsr)
    return float(np.mean(np.abs(pred - heldout.next_obs)))
