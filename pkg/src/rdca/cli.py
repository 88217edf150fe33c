"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error (bad input, missing or
corrupt file), 3 numerical error (blow-up, divergence).
"""
import argparse
import contextlib
import dataclasses
import glob
import json
import os
import sys

from .exceptions import DataError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _paths(inputs, pattern):
    """Expand directories to the files inside matching ``pattern``."""
    out = []
    for item in inputs:
        if os.path.isdir(item):
            out.extend(sorted(glob.glob(os.path.join(item, pattern))))
        else:
            out.append(item)
    if not out:
        raise FileNotFoundError(f"no input files matching {pattern} in {inputs}")
    return out


def _out(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def cmd_simulate(args):
    from .data import generate_trajectories, save_trajectory
    from .rollout import save_heatmap
    from .solver import SimParams

    params = SimParams.for_grid(args.grid, dt=args.dt)
    seeds = range(args.seed, args.seed + args.count)
    trajs = generate_trajectories(seeds, args.grid, params, args.duration, args.sample_every,
                                  args.init_low, args.init_high)
    for seed, traj in zip(seeds, trajs):
        save_trajectory(traj, _out(args, f"traj_{seed}.drt"))
        save_heatmap(traj.data[-1, 0], _out(args, f"traj_{seed}_u.png"), upscale=4)
        print(f"traj_{seed}.drt: {len(traj)} snapshots on {args.grid}x{args.grid}")


def cmd_dataset(args):
    from .data import (add_awgn, build_transition_dataset, equilibrium_filter, load_trajectory,
                       save_dataset, temporal_subsample)

    trajs = [load_trajectory(p) for p in _paths(args.input, "*.drt")]
    d = build_transition_dataset(trajs)
    if args.snr is not None:
        d = add_awgn(d, args.snr, args.seed)
    if args.fraction is not None:
        d = temporal_subsample(d, args.fraction, args.seed, args.mode)
    if args.equilibrium is not None:
        d = equilibrium_filter(d, args.equilibrium)
    path = args.output or _out(args, "dataset.drs")
    save_dataset(d, path)
    print(f"{path}: {len(d)} samples")


def cmd_train(args):
    from .data import load_dataset
    from .learner import TrainConfig, save_checkpoint, train

    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.learning_rate, latent_dim=args.latent_dim,
                      init_seed=args.seed, shuffle_seed=args.seed + 1)
    params, report = train(load_dataset(args.dataset), cfg)
    path = args.output or _out(args, "model.ckpt")
    save_checkpoint(params, path)
    with open(f"{path}.report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    print(f"{path}: best epoch {report.best_epoch}, "
          f"one-step MSE {report.final_one_step_mse:.3g}")


def cmd_rollout(args):
    from .data import load_trajectory, save_trajectory
    from .learner import load_checkpoint
    from .metrics import compare_states
    from .rollout import RolloutConfig, rollout, save_heatmap

    params = load_checkpoint(args.checkpoint)
    ref = load_trajectory(args.init)
    traj = rollout(params, ref[0], RolloutConfig(steps=args.steps,
                                                 sample_interval=ref.sample_interval))
    save_trajectory(traj, _out(args, "rollout.drt"))
    save_heatmap(traj.data[-1, 0], _out(args, "rollout_u.png"), upscale=4)
    if len(ref) > args.steps:
        report = compare_states(ref[args.steps], traj[args.steps]).to_dict()
        with open(_out(args, "metrics.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        print(" ".join(f"{k}={v:.4f}" for k, v in report.items()))
    else:
        print(f"reference has {len(ref)} snapshots; metrics skipped")


def cmd_identify(args):
    from .data import load_trajectory
    from .sindy import identify

    trajs = [load_trajectory(p) for p in _paths(args.input, "*.drt")]
    dx = args.dx if args.dx is not None else 2.0 / trajs[0].grid_shape[0]
    table = identify(trajs, dx, args.threshold, args.ridge, args.max_rows, args.seed)
    path = args.output or _out(args, "coeffs.csv")
    table.to_csv(path)
    for target in ("u_dot", "v_dot"):
        terms = " ".join(f"{t}={table[t, target]:.4g}" for t in sorted(table.support(target)))
        print(f"{target}: {terms or '(empty)'}")


def cmd_experiment(args):
    from .config import load_config
    from .harness import ExperimentConfig, level_label, run_experiment

    if args.config:
        cfg = load_config(args.config)
        if args.kind:
            cfg = dataclasses.replace(cfg, kind=args.kind, levels=None)
    else:
        make = ExperimentConfig.quick if args.quick else ExperimentConfig
        cfg = make(kind=args.kind or "baseline")
    overrides = {"out_dir": args.out_dir}
    if args.seed_given:
        overrides["master_seed"] = args.seed
    cfg = dataclasses.replace(cfg, **overrides)
    result = run_experiment(cfg)
    for level, stats in result.levels.items():
        print(f"{cfg.kind} level={level_label(level)} status={stats['status']} "
              f"mean_mae_accuracy={stats['mean']:.4f}")


def build_parser():
    p = _Parser(prog="rdca", description="Learn CA rules for reaction-diffusion data.")
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--out-dir", default="out", help="output directory (default ./out)")
    p.add_argument("--config", help="INI experiment configuration")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded numerics for bitwise-reproducible output")
    p.add_argument("--quick", action="store_true",
                   help="64x64 grid, 20 tests, 20 epochs for experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate trajectories from random initial states")
    s.add_argument("--grid", type=int, default=100)
    s.add_argument("--duration", type=float, default=25.0)
    s.add_argument("--sample-every", type=int, default=1000)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--init-low", type=float, default=0.0)
    s.add_argument("--init-high", type=float, default=1.0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("dataset", help="build and treat a transition dataset")
    s.add_argument("--input", nargs="+", required=True, help="trajectory files or directories")
    s.add_argument("--snr", type=float, help="add noise at this SNR (dB)")
    s.add_argument("--fraction", type=float, help="keep this fraction of samples")
    s.add_argument("--mode", choices=("samples", "snapshots"), default="samples")
    s.add_argument("--equilibrium", type=float, help="max mean change per pair")
    s.add_argument("--output")
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("train", help="train an update rule on a dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--batch-size", type=int, default=256)
    s.add_argument("--learning-rate", type=float, default=1e-3)
    s.add_argument("--latent-dim", type=int, default=16)
    s.add_argument("--output")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("rollout", help="roll a trained rule out from a trajectory's first state")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--init", required=True, help="reference trajectory file")
    s.add_argument("--steps", type=int, default=8)
    s.set_defaults(func=cmd_rollout)

    s = sub.add_parser("identify", help="fit sparse governing equations to trajectories")
    s.add_argument("--input", nargs="+", required=True, help="trajectory files or directories")
    s.add_argument("--threshold", type=float, default=0.15)
    s.add_argument("--ridge", type=float, default=1e-3)
    s.add_argument("--max-rows", type=int, default=500_000)
    s.add_argument("--dx", type=float, help="grid spacing (default 2 / grid size)")
    s.add_argument("--output")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("experiment", help="run a full experiment")
    s.add_argument("--kind", choices=("baseline", "noise", "sparsity", "equilibrium"))
    s.set_defaults(func=cmd_experiment)
    return p


def _thread_limit(args):
    limit = 1 if args.deterministic else args.threads
    if limit is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=limit)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if args.config and args.command != "experiment":
        parser.error("--config applies to the experiment command only")
    try:
        with _thread_limit(args):
            args.func(args)
    except (DataError, OSError, ValueError) as err:
        stage = getattr(err, "stage", None)
        print(f"error{f' in {stage}' if stage else ''}: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as err:
        stage = getattr(err, "stage", None)
        print(f"numerical error{f' in {stage}' if stage else ''}: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
