"""End-to-end experiments: simulate, treat, train, roll out, score, identify.

Each experiment trains one model per level and scores it on the same set of
test simulations. All randomness is derived from a single master seed with
``SeedSequence([master, purpose, index])``; treatment, model-init and shuffle
seeds do not depend on the level, so levels share their random numbers and
the outcome of a level does not depend on which other levels are run.
"""
import csv
import json
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import __version__
from .data import (EQUILIBRIUM_THRESHOLDS, SNR_LEVELS, SPARSITY_FRACTIONS, add_awgn,
                   build_transition_dataset, equilibrium_filter, generate_trajectories,
                   temporal_subsample)
from .exceptions import DomainError, EmptyDatasetError
from .learner import TrainConfig, train
from .metrics import compare_states
from .rollout import RolloutConfig, rollout, save_heatmap
from .sindy import identify
from .solver import SimParams, Trajectory

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "KINDS",
    "derive_seed",
    "level_label",
    "run_experiment",
    "run_baseline",
    "run_noise",
    "run_sparsity",
    "run_equilibrium",
]

KINDS = ("baseline", "noise", "sparsity", "equilibrium")
DEFAULT_LEVELS = {
    "baseline": (None,),
    "noise": SNR_LEVELS,
    "sparsity": SPARSITY_FRACTIONS,
    "equilibrium": EQUILIBRIUM_THRESHOLDS,
}

# purposes for derive_seed
TRAIN_SIMS, TEST_SIMS, NOISE, SUBSAMPLE, MODEL_INIT, SHUFFLE, SINDY_ROWS = range(7)

SUMMARY_COLUMNS = ["level", "sim_id", "ssim", "hist", "mae_accuracy"]
SPECIES_COLUMNS = ["level", "sim_id", "ssim_u", "ssim_v", "hist_u", "hist_v",
                   "mae_accuracy_u", "mae_accuracy_v"]
LEVEL_COLUMNS = ["level", "status", "n_samples", "n_tests", "mean", "min", "q1", "median",
                 "q3", "max", "mean_ssim", "mean_hist"]


def derive_seed(master, purpose, index=0):
    """A 32-bit seed determined by ``(master, purpose, index)``."""
    return int(np.random.SeedSequence([master, purpose, index]).generate_state(1)[0])


def level_label(level):
    return "none" if level is None else f"{level:.6g}"


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``levels`` defaults to the standard grid for ``kind``. ``quick`` shrinks
    the run to a 64x64 grid, 20 tests and 20 epochs unless those fields were
    set explicitly.
    """

    kind: str = "baseline"
    levels: tuple = None
    master_seed: int = 0
    grid: int = 100
    n_train: int = 10
    train_duration: float = 25.0
    n_test: int = 100
    test_duration: float = 8.0
    sample_every: int = 1000
    sim: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    sparsity_mode: str = "samples"
    sindy: bool = True
    sindy_threshold: float = 0.15
    sindy_ridge: float = 1e-3
    n_png: int = 1
    out_dir: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        if self.levels is None:
            self.levels = DEFAULT_LEVELS[self.kind]
        self.levels = tuple(None if lv is None else float(lv) for lv in self.levels)
        if not self.levels:
            raise DomainError("level grid is empty")
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        for name in ("grid", "n_train", "n_test", "sample_every"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")

    @classmethod
    def quick(cls, **kw):
        """Reduced-size configuration for fast checks."""
        kw.setdefault("grid", 64)
        kw.setdefault("n_test", 20)
        kw.setdefault("train", TrainConfig(epochs=20))
        return cls(**kw)

    @property
    def params(self):
        return SimParams.for_grid(self.grid, **self.sim)

    @property
    def rollout_steps(self):
        return int(round(self.test_duration / (self.params.dt * self.sample_every)))

    def to_dict(self):
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d


@dataclass
class ExperimentResult:
    """Per-test metrics, per-level coefficient fits and box statistics."""

    config: ExperimentConfig
    rows: list = field(default_factory=list)
    coeffs: dict = field(default_factory=dict)
    levels: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    def accuracies(self, level):
        return np.array([r["mae_accuracy"] for r in self.rows if r["level"] == level])

    def mean_accuracy(self, level):
        acc = self.accuracies(level)
        return float(acc.mean()) if len(acc) else float("nan")

    def status(self, level):
        return self.levels[level]["status"]


def _box_stats(values):
    if len(values) == 0:
        return dict.fromkeys(("mean", "min", "q1", "median", "q3", "max"), float("nan"))
    q = np.percentile(values, [0, 25, 50, 75, 100])
    return {"mean": float(np.mean(values)), "min": q[0], "q1": q[1], "median": q[2],
            "q3": q[3], "max": q[4]}


@contextmanager
def _stage(name):
    """Tag any failure with the pipeline stage it came from."""
    try:
        yield
    except Exception as err:
        if not hasattr(err, "stage"):
            err.stage = name
        raise


@lru_cache(maxsize=4)
def _simulations(seeds, n, params, duration, sample_every):
    return tuple(generate_trajectories(seeds, n, params, duration, sample_every))


def _training_data(cfg):
    seeds = tuple(derive_seed(cfg.master_seed, TRAIN_SIMS, i) for i in range(cfg.n_train))
    return list(_simulations(seeds, cfg.grid, cfg.params, cfg.train_duration, cfg.sample_every))


def _test_data(cfg):
    seeds = tuple(derive_seed(cfg.master_seed, TEST_SIMS, i) for i in range(cfg.n_test))
    return list(_simulations(seeds, cfg.grid, cfg.params, cfg.test_duration, cfg.sample_every))


def _treat(cfg, d, level):
    seed = derive_seed(cfg.master_seed, NOISE if cfg.kind == "noise" else SUBSAMPLE)
    if cfg.kind == "noise":
        return add_awgn(d, level, seed)
    if cfg.kind == "sparsity":
        return temporal_subsample(d, level, seed, cfg.sparsity_mode)
    if cfg.kind == "equilibrium":
        return equilibrium_filter(d, level)
    return d


def _observed_for_fit(cfg, tests, level):
    """Test observables as SINDy sees them; noisy in the noise sweep."""
    if cfg.kind != "noise":
        return tests
    d = add_awgn(build_transition_dataset(tests), level,
                 derive_seed(cfg.master_seed, NOISE, 1))
    out, pos = [], 0
    for t in tests:
        out.append(Trajectory(d.snapshots[pos:pos + len(t)], t.sample_interval, t.t0, t.meta))
        pos += len(t)
    return out


def _run_level(cfg, base, tests, level):
    label = level_label(level)
    with _stage(f"treat[{label}]"):
        try:
            d = _treat(cfg, base, level)
        except EmptyDatasetError:
            return None, None, None
        if len(d) < cfg.train.batch_size:
            return None, None, None
    tcfg = replace(cfg.train,
                   init_seed=derive_seed(cfg.master_seed, MODEL_INIT),
                   shuffle_seed=derive_seed(cfg.master_seed, SHUFFLE))
    with _stage(f"train[{label}]"):
        params, report = train(d, tcfg)
    rcfg = RolloutConfig(steps=cfg.rollout_steps,
                         sample_interval=cfg.params.dt * cfg.sample_every)
    with _stage(f"rollout[{label}]"):
        rolls = [rollout(params, t[0], rcfg) for t in tests]
    return d, (params, report), rolls


def run_experiment(cfg):
    """Run every level of ``cfg`` and write outputs if ``cfg.out_dir`` is set."""
    with _stage("simulate"):
        trajs = _training_data(cfg)
        tests = _test_data(cfg)
        base = build_transition_dataset(trajs)
    result = ExperimentResult(cfg)
    sindy_seed = derive_seed(cfg.master_seed, SINDY_ROWS)
    dx = cfg.params.dx
    for level in cfg.levels:
        d, fitted, rolls = _run_level(cfg, base, tests, level)
        if d is None:
            result.levels[level] = {"status": "insufficient_data", "n_samples": 0,
                                    "n_tests": 0, **_box_stats([])}
            result.levels[level].update(mean_ssim=float("nan"), mean_hist=float("nan"))
            continue
        result.reports[level] = fitted[1]
        with _stage(f"score[{level_label(level)}]"):
            metrics = [compare_states(t[len(r) - 1], r[len(r) - 1]) for t, r in zip(tests, rolls)]
        for sim_id, m in enumerate(metrics):
            result.rows.append({"level": level, "sim_id": sim_id, **m.to_dict()})
        acc = [m.mae_accuracy for m in metrics]
        result.levels[level] = {
            "status": "ok", "n_samples": len(d), "n_tests": len(metrics), **_box_stats(acc),
            "mean_ssim": float(np.mean([m.ssim for m in metrics])),
            "mean_hist": float(np.mean([m.hist for m in metrics])),
        }
        if cfg.sindy:
            with _stage(f"identify[{level_label(level)}]"):
                obs = identify(_observed_for_fit(cfg, tests, level), dx, cfg.sindy_threshold,
                               cfg.sindy_ridge, seed=sindy_seed, source="observables")
                ca = identify(rolls, dx, cfg.sindy_threshold, cfg.sindy_ridge,
                              seed=sindy_seed, source="learned-ca")
            result.coeffs[level] = (obs, ca)
        if cfg.out_dir:
            _write_level_artifacts(cfg, level, tests, rolls, fitted[1],
                                   result.coeffs.get(level))
    if cfg.out_dir:
        _write_tables(result)
    return result


def run_baseline(cfg):
    return run_experiment(replace(cfg, kind="baseline", levels=(None,)))


def _sweep(kind):
    def run(cfg):
        levels = cfg.levels if cfg.kind == kind else None
        return run_experiment(replace(cfg, kind=kind, levels=levels))
    run.__name__ = f"run_{kind}"
    run.__doc__ = f"Train and score one model per {kind} level."
    return run


run_noise = _sweep("noise")
run_sparsity = _sweep("sparsity")
run_equilibrium = _sweep("equilibrium")


def _experiment_dir(cfg):
    path = os.path.join(cfg.out_dir, cfg.kind)
    os.makedirs(path, exist_ok=True)
    return path


def _write_level_artifacts(cfg, level, tests, rolls, report, coeffs):
    root = _experiment_dir(cfg)
    label = level_label(level)
    for sub in ("png", "coeffs", "reports"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    for sim_id in range(min(cfg.n_png, len(tests))):
        truth, pred = tests[sim_id], rolls[sim_id]
        stem = os.path.join(root, "png", f"level_{label}_sim{sim_id}")
        save_heatmap(truth.data[len(pred) - 1, 0], f"{stem}_observed_u.png", upscale=4)
        save_heatmap(pred.data[-1, 0], f"{stem}_learned_u.png", upscale=4)
    if coeffs is not None:
        obs, ca = coeffs
        obs.to_csv(os.path.join(root, "coeffs", f"level_{label}_observables.csv"))
        ca.to_csv(os.path.join(root, "coeffs", f"level_{label}_learned_ca.csv"))
    with open(os.path.join(root, "reports", f"level_{label}_train.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _write_tables(result):
    cfg = result.config
    root = _experiment_dir(cfg)
    rows = [{**r, "level": level_label(r["level"])} for r in result.rows]
    _write_csv(os.path.join(root, "summary.csv"), SUMMARY_COLUMNS, rows)
    _write_csv(os.path.join(root, "summary_species.csv"), SPECIES_COLUMNS, rows)
    _write_csv(os.path.join(root, "levels.csv"), LEVEL_COLUMNS,
               [{"level": level_label(lv), **stats} for lv, stats in result.levels.items()])
    provenance = {
        "package_version": __version__,
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out_dir"},
        "seeds": {
            "train_sims": [derive_seed(cfg.master_seed, TRAIN_SIMS, i) for i in range(cfg.n_train)],
            "test_sims": [derive_seed(cfg.master_seed, TEST_SIMS, i) for i in range(cfg.n_test)],
            "noise": derive_seed(cfg.master_seed, NOISE),
            "noise_test_observables": derive_seed(cfg.master_seed, NOISE, 1),
            "subsample": derive_seed(cfg.master_seed, SUBSAMPLE),
            "model_init": derive_seed(cfg.master_seed, MODEL_INIT),
            "shuffle": derive_seed(cfg.master_seed, SHUFFLE),
            "sindy_rows": derive_seed(cfg.master_seed, SINDY_ROWS),
        },
        "sim_params": cfg.params.to_dict(),
    }
    with open(os.path.join(root, "provenance.json"), "w") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True)
