"""Transition datasets built from trajectories, and their treatments.

A :class:`Dataset` keeps the source snapshots and an index of the kept
transition samples. A sample is one (cell, snapshot pair): the cell's state
and four neighbors at time t plus the change over one sample interval.
Treatments (noise, subsampling, equilibrium filtering) return new datasets
and append themselves to the provenance record.
"""
import copy
import json
import math

import numpy as np

from . import _container
from .exceptions import DomainError, EmptyDatasetError
from .grid import neighbor_stack
from .solver import SimParams, Trajectory, random_init, simulate

__all__ = [
    "Dataset",
    "build_transition_dataset",
    "add_awgn",
    "awgn_sigma",
    "temporal_subsample",
    "equilibrium_filter",
    "generate_trajectories",
    "regenerate",
    "save_dataset",
    "load_dataset",
    "save_trajectory",
    "load_trajectory",
    "EQUILIBRIUM_THRESHOLDS",
    "SNR_LEVELS",
    "SPARSITY_FRACTIONS",
]

DATASET_MAGIC = b"DRSD"
TRAJECTORY_MAGIC = b"DRST"
FORMAT_VERSION = 1

SNR_LEVELS = (100.0, 35.0, 30.0, 25.0, 10.0, 1.0)
SPARSITY_FRACTIONS = (0.8, 0.5, 0.4, 0.3, 0.1)
EQUILIBRIUM_THRESHOLDS = tuple(10.0 ** e for e in (-0.5, -1.0, -1.6, -1.8, -2.0, -2.2))


class Dataset:
    """Transition samples over a set of source snapshots.

    Attributes
    ----------
    snapshots : ndarray, shape (n_snapshots, 2, n_rows, n_cols)
        All source snapshots, trajectories concatenated.
    pair_start : ndarray of int64, shape (n_pairs,)
        ``snapshots[s]`` and ``snapshots[s + 1]`` form transition pair ``p``
        where ``s = pair_start[p]``.
    index : ndarray of int64
        Sorted ids of the kept samples; id ``p * n_cells + c`` is cell ``c``
        (row-major) of pair ``p``.
    sample_interval : float
    provenance : dict
    """

    def __init__(self, snapshots, pair_start, index, sample_interval, provenance=None):
        self.snapshots = np.asarray(snapshots, dtype=np.float64)
        self.pair_start = np.asarray(pair_start, dtype=np.int64)
        self.index = np.asarray(index, dtype=np.int64)
        self.sample_interval = float(sample_interval)
        self.provenance = provenance if provenance is not None else {"sources": [], "treatments": []}
        if self.snapshots.ndim != 4 or self.snapshots.shape[1] != 2:
            raise DomainError(f"snapshots must be (S, 2, n, m), got {self.snapshots.shape}")

    @property
    def grid_shape(self):
        return self.snapshots.shape[2:]

    @property
    def n_cells(self):
        return int(np.prod(self.grid_shape))

    @property
    def n_pairs(self):
        return len(self.pair_start)

    def __len__(self):
        return len(self.index)

    def __repr__(self):
        return (f"Dataset(n_samples={len(self)}, n_pairs={self.n_pairs}, "
                f"grid={tuple(self.grid_shape)}, sample_interval={self.sample_interval})")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.sample_interval == other.sample_interval
            and self.snapshots.shape == other.snapshots.shape
            and np.array_equal(self.snapshots, other.snapshots)
            and np.array_equal(self.pair_start, other.pair_start)
            and np.array_equal(self.index, other.index)
            and self.provenance == other.provenance
        )

    def _derive(self, snapshots=None, index=None, treatment=None):
        prov = copy.deepcopy(self.provenance)
        if treatment is not None:
            prov.setdefault("treatments", []).append(treatment)
        return Dataset(
            self.snapshots if snapshots is None else snapshots,
            self.pair_start,
            self.index if index is None else index,
            self.sample_interval,
            prov,
        )

    def pair_ids(self):
        """Pair id of every kept sample."""
        if self.n_cells == 0:
            return np.zeros(0, dtype=np.int64)
        return self.index // self.n_cells

    def pair_mean_change(self):
        """Mean over cells and species of ``|X(t+1) - X(t)|`` for every pair."""
        s = self.pair_start
        if len(s) == 0:
            return np.zeros(0)
        return np.abs(self.snapshots[s + 1] - self.snapshots[s]).mean(axis=(1, 2, 3))

    def arrays(self):
        """Materialize the kept samples.

        Returns
        -------
        X : ndarray, shape (n_samples, 10)
            Cell (u, v) followed by neighbors (up, bottom, left, right) x (u, v).
        y : ndarray, shape (n_samples, 2)
            One-interval change of the cell state.
        """
        n = len(self)
        X = np.empty((n, 10))
        y = np.empty((n, 2))
        if n == 0:
            return X, y
        pairs = self.pair_ids()
        cells = self.index % self.n_cells
        bounds = np.flatnonzero(np.diff(pairs)) + 1
        starts = np.concatenate([[0], bounds])
        stops = np.concatenate([bounds, [n]])
        for lo, hi in zip(starts, stops):
            s = self.pair_start[pairs[lo]]
            before = self.snapshots[s]
            c = cells[lo:hi]
            X[lo:hi, :2] = before.reshape(2, -1)[:, c].T
            X[lo:hi, 2:] = neighbor_stack(before).reshape(8, -1)[:, c].T
            y[lo:hi] = (self.snapshots[s + 1] - before).reshape(2, -1)[:, c].T
        return X, y

    @property
    def samples(self):
        """Kept samples as ``(cell, neighbors, delta)`` tuples (small datasets only)."""
        X, y = self.arrays()
        return [(x[:2], x[2:], d) for x, d in zip(X, y)]


def build_transition_dataset(trajs):
    """One sample per (cell, consecutive-snapshot pair) of every trajectory."""
    trajs = list(trajs)
    if not trajs:
        return Dataset(np.zeros((0, 2, 0, 0)), [], [], 1.0, {"sources": [], "treatments": []})
    shapes = {t.grid_shape for t in trajs}
    if len(shapes) != 1:
        raise DomainError(f"trajectories have mismatched grid sizes: {sorted(shapes)}")
    intervals = {t.sample_interval for t in trajs}
    if len(intervals) != 1:
        raise DomainError(f"trajectories have mismatched sample intervals: {sorted(intervals)}")
    snapshots = np.concatenate([t.data for t in trajs])
    pair_start = []
    offset = 0
    for t in trajs:
        pair_start.extend(range(offset, offset + len(t) - 1))
        offset += len(t)
    n_cells = int(np.prod(trajs[0].grid_shape))
    index = np.arange(len(pair_start) * n_cells, dtype=np.int64)
    prov = {"sources": [copy.deepcopy(t.meta) for t in trajs], "treatments": []}
    return Dataset(snapshots, pair_start, index, intervals.pop(), prov)


def awgn_sigma(mean_signal, snr_db):
    """Noise standard deviation ``mean_signal * 10**(-snr_db / 10)``.

    The exponent is applied to the amplitude, not the power.
    """
    return mean_signal * 10.0 ** (-snr_db / 10.0)


def add_awgn(d, snr_db, seed):
    """Add Gaussian noise to every source snapshot before sample extraction.

    The mean signal is the mean of ``|u|`` and ``|v|`` pooled over all source
    snapshots. Each snapshot draws from its own child seed, so the result does
    not depend on processing order.
    """
    if len(d) == 0:
        raise EmptyDatasetError("cannot add noise to an empty dataset")
    mean_signal = float(np.abs(d.snapshots).mean())
    sigma = awgn_sigma(mean_signal, snr_db)
    children = np.random.SeedSequence(seed).spawn(len(d.snapshots))
    noisy = np.empty_like(d.snapshots)
    for i, (snap, child) in enumerate(zip(d.snapshots, children)):
        noisy[i] = snap + np.random.default_rng(child).normal(0.0, sigma, size=snap.shape)
    return d._derive(snapshots=noisy, treatment={
        "op": "awgn", "snr_db": float(snr_db), "seed": int(seed),
        "mean_signal": mean_signal, "sigma": sigma,
    })


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def temporal_subsample(d, fraction, seed, mode="samples"):
    """Keep a seeded uniform random subset, preserving order.

    ``mode="samples"`` keeps ``round(fraction * len(d))`` individual samples;
    ``mode="snapshots"`` keeps that fraction of the snapshot pairs present.
    """
    if not 0 < fraction <= 1:
        raise DomainError(f"fraction must lie in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    if mode == "samples":
        k = _round_half_up(fraction * len(d))
        keep = np.sort(rng.choice(len(d), size=k, replace=False))
        index = d.index[keep]
    elif mode == "snapshots":
        present = np.unique(d.pair_ids())
        k = _round_half_up(fraction * len(present))
        chosen = rng.choice(present, size=k, replace=False)
        index = d.index[np.isin(d.pair_ids(), chosen)]
    else:
        raise DomainError(f"unknown subsample mode {mode!r}")
    return d._derive(index=index, treatment={
        "op": "subsample", "fraction": float(fraction), "seed": int(seed), "mode": mode,
    })


def equilibrium_filter(d, max_mean_change):
    """Keep only pairs whose mean absolute change is at most ``max_mean_change``."""
    if not max_mean_change > 0:
        raise DomainError(f"threshold must be positive, got {max_mean_change}")
    ok = d.pair_mean_change() <= max_mean_change
    index = d.index[ok[d.pair_ids()]] if len(d) else d.index
    if len(index) == 0:
        raise EmptyDatasetError(
            f"no snapshot pair has mean change <= {max_mean_change:.4g}")
    return d._derive(index=index, treatment={
        "op": "equilibrium", "max_mean_change": float(max_mean_change),
    })


def generate_trajectories(seeds, n, params=None, duration=25.0, sample_every=1000,
                          lo=0.0, hi=1.0):
    """Simulate one trajectory per seed from :func:`random_init` states."""
    params = params or SimParams.for_grid(n)
    trajs = []
    for seed in seeds:
        traj = simulate(random_init(seed, n, lo, hi), params, duration, sample_every)
        traj.meta.update({"seed": int(seed), "n": int(n), "init_range": [lo, hi]})
        trajs.append(traj)
    return trajs


def regenerate(provenance):
    """Rebuild a dataset from its provenance record alone."""
    trajs = []
    for src in provenance["sources"]:
        params = SimParams(**src["params"])
        lo, hi = src["init_range"]
        trajs.extend(generate_trajectories([src["seed"]], src["n"], params,
                                           src["duration"], src["sample_every"], lo, hi))
    d = build_transition_dataset(trajs)
    for t in provenance.get("treatments", []):
        if t["op"] == "awgn":
            d = add_awgn(d, t["snr_db"], t["seed"])
        elif t["op"] == "subsample":
            d = temporal_subsample(d, t["fraction"], t["seed"], t.get("mode", "samples"))
        elif t["op"] == "equilibrium":
            d = equilibrium_filter(d, t["max_mean_change"])
        else:
            raise DomainError(f"unknown treatment {t['op']!r}")
    return d


def save_dataset(d, path, sidecar=True):
    """Write ``d`` to ``path``; also write ``<path>.json`` provenance if asked."""
    header = {
        "grid": list(d.grid_shape),
        "sample_interval": d.sample_interval,
        "provenance": d.provenance,
    }
    _container.write(path, DATASET_MAGIC, FORMAT_VERSION, header,
                     [d.snapshots, d.pair_start, d.index])
    if sidecar:
        with open(f"{path}.json", "w") as fh:
            json.dump(d.provenance, fh, indent=2, sort_keys=True)


def load_dataset(path):
    header, (snapshots, pair_start, index) = _container.read(path, DATASET_MAGIC, FORMAT_VERSION)
    return Dataset(snapshots, pair_start, index, header["sample_interval"], header["provenance"])


def save_trajectory(traj, path):
    header = {"sample_interval": traj.sample_interval, "t0": traj.t0, "meta": traj.meta}
    _container.write(path, TRAJECTORY_MAGIC, FORMAT_VERSION, header, [traj.data])


def load_trajectory(path):
    header, (data,) = _container.read(path, TRAJECTORY_MAGIC, FORMAT_VERSION)
    return Trajectory(data, header["sample_interval"], header["t0"], header["meta"])
