import csv

import numpy as np
import pytest

from rdca.config import parse_config
from rdca.data import EQUILIBRIUM_THRESHOLDS, SNR_LEVELS, SPARSITY_FRACTIONS
from rdca.exceptions import DomainError, NumericalError
from rdca.harness import (ExperimentConfig, derive_seed, run_baseline, run_equilibrium,
                          run_experiment, run_noise)
from rdca.learner import TrainConfig


def tiny(**kw):
    base = dict(grid=12, n_train=2, train_duration=4.0, n_test=3, test_duration=2.0,
                train=TrainConfig(epochs=2, batch_size=32))
    base.update(kw)
    return ExperimentConfig(**base)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_default_level_grids():
    assert ExperimentConfig(kind="noise").levels == SNR_LEVELS
    assert ExperimentConfig(kind="sparsity").levels == SPARSITY_FRACTIONS
    assert ExperimentConfig(kind="equilibrium").levels == EQUILIBRIUM_THRESHOLDS
    assert ExperimentConfig().levels == (None,)
    with pytest.raises(DomainError):
        ExperimentConfig(kind="other")


def test_quick_config():
    cfg = ExperimentConfig.quick(kind="noise")
    assert (cfg.grid, cfg.n_test, cfg.train.epochs) == (64, 20, 20)
    assert cfg.rollout_steps == 8


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert len({derive_seed(0, p, i) for p in range(4) for i in range(10)}) == 40


def test_baseline_outputs(tmp_path):
    result = run_baseline(tiny(out_dir=str(tmp_path)))
    root = tmp_path / "baseline"
    rows = read_csv(root / "summary.csv")
    assert list(rows[0]) == ["level", "sim_id", "ssim", "hist", "mae_accuracy"]
    assert len(rows) == 3
    assert len(read_csv(root / "summary_species.csv")) == 3
    assert read_csv(root / "levels.csv")[0]["status"] == "ok"
    assert (root / "coeffs" / "level_none_observables.csv").exists()
    assert (root / "coeffs" / "level_none_learned_ca.csv").exists()
    assert (root / "png" / "level_none_sim0_learned_u.png").exists()
    assert (root / "provenance.json").exists()
    assert 0 < result.mean_accuracy(None) <= 1


def test_single_test_simulation(tmp_path):
    run_baseline(tiny(n_test=1, out_dir=str(tmp_path)))
    assert len(read_csv(tmp_path / "baseline" / "summary.csv")) == 1


def test_same_seed_same_bytes(tmp_path):
    for name in ("a", "b"):
        run_baseline(tiny(out_dir=str(tmp_path / name)))
    for f in ("summary.csv", "summary_species.csv", "levels.csv", "provenance.json",
              "coeffs/level_none_learned_ca.csv"):
        assert (tmp_path / "a" / "baseline" / f).read_bytes() == \
            (tmp_path / "b" / "baseline" / f).read_bytes()


def test_level_order_irrelevant():
    a = run_noise(tiny(kind="noise", levels=(100.0, 10.0), sindy=False))
    b = run_noise(tiny(kind="noise", levels=(10.0, 100.0), sindy=False))
    for level in (100.0, 10.0):
        assert np.array_equal(a.accuracies(level), b.accuracies(level))


def test_insufficient_data_recorded(tmp_path):
    cfg = tiny(kind="equilibrium", levels=(1.0, 1e-9), sindy=False, out_dir=str(tmp_path))
    result = run_equilibrium(cfg)
    assert result.status(1.0) == "ok"
    assert result.status(1e-9) == "insufficient_data"
    levels = {r["level"]: r for r in read_csv(tmp_path / "equilibrium" / "levels.csv")}
    assert levels["1e-09"]["status"] == "insufficient_data"
    summary = read_csv(tmp_path / "equilibrium" / "summary.csv")
    assert {r["level"] for r in summary} == {"1"}


def test_stage_is_reported():
    cfg = tiny(train=TrainConfig(epochs=1, batch_size=32, output_scale=1e300))
    with pytest.raises(NumericalError) as err:
        run_experiment(cfg)
    assert err.value.stage == "train[none]"


def test_parse_config():
    cfg = parse_config("""
[experiment]
kind = sparsity
levels = 0.8, 0.1
grid = 32
n_test = 5

[train]
epochs = 3
normalize = false

[sim]
k = 0.004

[sindy]
threshold = 0.2
enabled = no
""")
    assert cfg.kind == "sparsity" and cfg.levels == (0.8, 0.1)
    assert cfg.grid == 32 and cfg.n_test == 5
    assert cfg.train.epochs == 3 and cfg.train.normalize is False
    assert cfg.params.k == 0.004
    assert cfg.sindy_threshold == 0.2 and cfg.sindy is False


def test_parse_config_quick_keeps_overrides():
    cfg = parse_config("[experiment]\nquick = true\n[train]\nepochs = 4\n")
    assert cfg.grid == 64 and cfg.train.epochs == 4


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[experiment]\nbogus = 1\n",
    "[experiment]\ngrid = many\n",
    "[train]\nepochs = 0\n",
    "[sim]\ndt = 1.0\n",
    "not an ini file",
])
def test_parse_config_errors(text):
    with pytest.raises(DomainError):
        parse_config(text)
