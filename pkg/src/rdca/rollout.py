"""Roll the learned update rule forward on a periodic grid."""
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, RolloutError
from .grid import GridState, stencil_features
from .solver import Trajectory

__all__ = ["RolloutConfig", "ca_step", "rollout", "save_heatmap"]


@dataclass(frozen=True)
class RolloutConfig:
    steps: int = 8
    clamp_lo: float = None
    clamp_hi: float = None
    sample_interval: float = 1.0

    def __post_init__(self):
        if self.steps < 0:
            raise DomainError(f"steps must be >= 0, got {self.steps}")
        if (self.clamp_lo is None) != (self.clamp_hi is None):
            raise DomainError("give both clamp bounds or neither")
        if self.clamp_lo is not None and not self.clamp_lo < self.clamp_hi:
            raise DomainError("clamp_lo must be below clamp_hi")


def ca_step(params, x):
    """Synchronous update of a ``(2, n, m)`` state array; returns a new array."""
    feats = stencil_features(x)
    delta = params.predict_delta(feats[:, :2], feats[:, 2:])
    return x + delta.T.reshape(x.shape)


def rollout(params, init, cfg=RolloutConfig()):
    """Apply the rule ``cfg.steps`` times; every state is kept."""
    out = np.empty((cfg.steps + 1, 2) + init.shape)
    out[0] = init.to_array()
    for s in range(1, cfg.steps + 1):
        x = ca_step(params, out[s - 1])
        if cfg.clamp_lo is not None:
            np.clip(x, cfg.clamp_lo, cfg.clamp_hi, out=x)
        if not np.isfinite(x).all():
            raise RolloutError(f"non-finite state at step {s}", step=s)
        out[s] = x
    return Trajectory(out, cfg.sample_interval, t0=init.time,
                      meta={"source": "learned-ca", "steps": cfg.steps})


def save_heatmap(field, path, upscale=1):
    """Write a grayscale PNG of a 2-D field, min-max scaled to 0..255."""
    from PIL import Image

    f = np.asarray(field, dtype=np.float64)
    lo, hi = f.min(), f.max()
    img = np.zeros_like(f) if hi == lo else (f - lo) / (hi - lo)
    img = np.round(img * 255).astype(np.uint8)
    if upscale > 1:
        img = np.kron(img, np.ones((upscale, upscale), dtype=np.uint8))
    Image.fromarray(img, mode="L").save(path)
