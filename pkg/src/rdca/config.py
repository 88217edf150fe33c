"""Experiment configuration files.

INI syntax, one section per stage::

    [experiment]
    kind = noise
    levels = 100, 25, 1
    grid = 64
    n_test = 20

    [sim]
    k = 0.005

    [train]
    epochs = 20

    [sindy]
    threshold = 0.15

Unknown sections or keys are errors, so typos do not pass silently.
"""
import configparser
import dataclasses

from .exceptions import DomainError
from .harness import ExperimentConfig
from .learner import TrainConfig
from .solver import SimParams

__all__ = ["load_config", "parse_config"]

_EXPERIMENT_KEYS = {
    "kind": str, "master_seed": int, "grid": int, "n_train": int, "train_duration": float,
    "n_test": int, "test_duration": float, "sample_every": int, "sparsity_mode": str,
    "n_png": int, "out_dir": str,
}
_SIM_KEYS = {"a", "b", "tau", "k", "dt"}
_SINDY_KEYS = {"enabled": "sindy", "threshold": "sindy_threshold", "ridge": "sindy_ridge"}


def _bool(text):
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _levels(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(None if t.lower() == "none" else float(t) for t in items)


def _convert(section, key, raw, kind):
    try:
        if kind is bool:
            return _bool(raw)
        return kind(raw)
    except ValueError as err:
        raise DomainError(f"[{section}] {key}: {err}") from None


def parse_config(text, source="<string>"):
    """Build an :class:`ExperimentConfig` from INI text."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise DomainError(f"{source}: {err}") from None
    unknown = set(cp.sections()) - {"experiment", "sim", "train", "sindy"}
    if unknown:
        raise DomainError(f"{source}: unknown sections {sorted(unknown)}")

    kw = {}
    quick = False
    if cp.has_section("experiment"):
        for key, raw in cp.items("experiment"):
            if key == "levels":
                kw["levels"] = _levels(raw)
            elif key == "quick":
                quick = _convert("experiment", key, raw, bool)
            elif key in _EXPERIMENT_KEYS:
                kw[key] = _convert("experiment", key, raw, _EXPERIMENT_KEYS[key])
            else:
                raise DomainError(f"{source}: unknown key [experiment] {key}")
    if cp.has_section("sim"):
        sim = {}
        for key, raw in cp.items("sim"):
            if key not in _SIM_KEYS:
                raise DomainError(f"{source}: unknown key [sim] {key}")
            sim[key] = _convert("sim", key, raw, float)
        SimParams.for_grid(kw.get("grid", 64), **sim)  # validate early
        kw["sim"] = sim
    if cp.has_section("train"):
        types = {f.name: getattr(f.type, "__name__", f.type)
                 for f in dataclasses.fields(TrainConfig)}
        train = {}
        for key, raw in cp.items("train"):
            if key not in types:
                raise DomainError(f"{source}: unknown key [train] {key}")
            kind = {"int": int, "float": float, "bool": bool}[types[key]]
            train[key] = _convert("train", key, raw, kind)
        kw["train"] = train
    if cp.has_section("sindy"):
        for key, raw in cp.items("sindy"):
            if key not in _SINDY_KEYS:
                raise DomainError(f"{source}: unknown key [sindy] {key}")
            kind = bool if key == "enabled" else float
            kw[_SINDY_KEYS[key]] = _convert("sindy", key, raw, kind)

    if quick:
        base = ExperimentConfig.quick().train
        if "train" in kw:
            kw["train"] = dataclasses.replace(base, **kw["train"])
        return ExperimentConfig.quick(**kw)
    return ExperimentConfig(**kw)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))
