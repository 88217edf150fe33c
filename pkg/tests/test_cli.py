import csv

import pytest

from rdca.cli import main
from rdca.data import load_dataset, load_trajectory


def run(tmp_path, *argv):
    return main(["--out-dir", str(tmp_path), *argv])


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--no-such-flag", "simulate"])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 1


def test_simulate_snapshot_count(tmp_path):
    assert run(tmp_path, "simulate", "--grid", "8", "--duration", "25",
               "--sample-every", "1000") == 0
    traj = load_trajectory(tmp_path / "traj_0.drt")
    assert len(traj) == 26
    assert (tmp_path / "traj_0_u.png").exists()


@pytest.fixture
def trajs(tmp_path):
    run(tmp_path, "--seed", "3", "simulate", "--grid", "12", "--duration", "4", "--count", "2")
    return tmp_path


def test_dataset_train_rollout(trajs):
    assert run(trajs, "dataset", "--input", str(trajs), "--snr", "30",
               "--fraction", "0.5") == 0
    d = load_dataset(trajs / "dataset.drs")
    assert len(d) == round(0.5 * 2 * 4 * 144)
    assert [t["op"] for t in d.provenance["treatments"]] == ["awgn", "subsample"]
    assert run(trajs, "train", "--dataset", str(trajs / "dataset.drs"), "--epochs", "2",
               "--batch-size", "32") == 0
    assert (trajs / "model.ckpt").exists()
    assert run(trajs, "rollout", "--checkpoint", str(trajs / "model.ckpt"),
               "--init", str(trajs / "traj_3.drt"), "--steps", "4") == 0
    assert (trajs / "metrics.json").exists()
    assert len(load_trajectory(trajs / "rollout.drt")) == 5


def test_identify_emits_18_rows(trajs):
    out = trajs / "c.csv"
    assert run(trajs, "identify", "--input", str(trajs), "--threshold", "1e-3",
               "--output", str(out)) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    assert len(rows) == 18


def test_missing_file_is_data_error(tmp_path):
    assert run(tmp_path, "train", "--dataset", str(tmp_path / "missing.drs")) == 2


def test_corrupt_file_is_data_error(trajs):
    path = trajs / "traj_3.drt"
    path.write_bytes(path.read_bytes()[:-5])
    assert run(trajs, "identify", "--input", str(path)) == 2


def test_bad_value_is_data_error(trajs):
    assert run(trajs, "dataset", "--input", str(trajs), "--fraction", "2") == 2


def test_blowup_is_numerical_error(tmp_path):
    assert run(tmp_path, "simulate", "--grid", "4", "--duration", "1", "--dt", "0.3",
               "--sample-every", "1", "--init-high", "1e100") == 3


def test_experiment_from_config(tmp_path):
    cfg = tmp_path / "baseline.cfg"
    cfg.write_text("[experiment]\ngrid = 10\nn_train = 2\ntrain_duration = 3\n"
                   "n_test = 2\ntest_duration = 2\n[train]\nepochs = 1\nbatch_size = 32\n")
    assert main(["--out-dir", str(tmp_path / "out"), "--config", str(cfg),
                 "--deterministic", "experiment"]) == 0
    with open(tmp_path / "out" / "baseline" / "summary.csv") as fh:
        header = fh.readline().strip()
    assert header == "level,sim_id,ssim,hist,mae_accuracy"


def test_config_only_for_experiment(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["--config", "x.cfg", "simulate"])
    assert err.value.code == 1
