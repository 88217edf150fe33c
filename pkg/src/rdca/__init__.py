"""Learn cellular-automaton update rules for reaction-diffusion dynamics.

The package simulates the FitzHugh-Nagumo system, turns trajectories into
per-cell transition samples, trains a small neural update rule, rolls it
out as a cellular automaton and identifies sparse governing equations from
either source.
"""
__version__ = "0.1.0"

from .data import Dataset, build_transition_dataset, generate_trajectories  # noqa: E402
from .exceptions import (ChecksumError, DataError, DomainError, EmptyDatasetError,  # noqa: E402
                         FormatError, NumericalError, TruncatedFileError,
                         VersionMismatchError)
from .grid import GridState, laplacian  # noqa: E402
from .harness import ExperimentConfig, ExperimentResult, run_experiment  # noqa: E402
from .learner import CARegressor, NetworkParams, TrainConfig, train  # noqa: E402
from .metrics import compare_states, hist_accuracy, mae_accuracy, ssim  # noqa: E402
from .rollout import RolloutConfig, rollout  # noqa: E402
from .sindy import STLSQ, CoeffTable, PDELibrary, identify  # noqa: E402
from .solver import SimParams, Trajectory, random_init, simulate  # noqa: E402

__all__ = [
    "CARegressor", "ChecksumError", "CoeffTable", "DataError", "Dataset", "DomainError",
    "EmptyDatasetError", "ExperimentConfig", "ExperimentResult", "FormatError", "GridState",
    "NetworkParams", "NumericalError", "PDELibrary", "RolloutConfig", "STLSQ", "SimParams",
    "TrainConfig", "Trajectory", "TruncatedFileError", "VersionMismatchError",
    "build_transition_dataset", "compare_states", "generate_trajectories", "hist_accuracy",
    "identify", "laplacian", "mae_accuracy", "random_init", "rollout", "run_experiment",
    "simulate", "ssim", "train",
]
