"""Explicit finite-difference integrator for the FitzHugh-Nagumo system.

    du/dt     = u - u**3 + k - v + a * lap(u)
    tau dv/dt = u - v + b * lap(v)

Both the reaction and the diffusion of ``v`` are divided by ``tau``.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DomainError, NumericalBlowupError
from .grid import GridState, laplacian

__all__ = [
    "DOMAIN_LENGTH",
    "SimParams",
    "Trajectory",
    "reaction_u",
    "reaction_v",
    "step",
    "simulate",
    "random_init",
    "homogeneous_fixed_point",
]

#: Side length of the square domain [-1, 1]^2.
DOMAIN_LENGTH = 2.0

# explicit-scheme diffusion limit on dt * D / dx**2
STABILITY_LIMIT = 0.25


@dataclass(frozen=True)
class SimParams:
    a: float = 2.8e-4
    b: float = 5e-3
    tau: float = 0.1
    k: float = 0.005
    dx: float = DOMAIN_LENGTH / 100
    dt: float = 0.001

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise DomainError("diffusivities a and b must be non-negative")
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if not self.dx > 0 or not self.dt > 0:
            raise DomainError("dx and dt must be positive")
        if self.courant > STABILITY_LIMIT:
            raise DomainError(
                f"unstable explicit scheme: dt*D/dx^2 = {self.courant:.4g} > {STABILITY_LIMIT}"
            )

    @property
    def courant(self):
        """Largest dt * D / dx**2, with v's effective diffusivity b / tau."""
        return self.dt * max(self.a, self.b / self.tau) / self.dx**2

    @classmethod
    def for_grid(cls, n, **kwargs):
        """Parameters with ``dx`` set for an ``n x n`` grid on [-1, 1]^2."""
        return cls(dx=DOMAIN_LENGTH / n, **kwargs)

    def to_dict(self):
        return asdict(self)


class Trajectory:
    """Snapshots stored every ``sample_interval`` seconds.

    Parameters
    ----------
    data : array of shape (n_snapshots, 2, n_rows, n_cols)
        Stacked (u, v) states.
    sample_interval : float
        Seconds between consecutive snapshots.
    t0 : float
        Time of the first snapshot.
    meta : dict, optional
        Free-form provenance (seed, parameters, ...).
    """

    def __init__(self, data, sample_interval, t0=0.0, meta=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 4 or data.shape[1] != 2:
            raise DomainError(f"expected (T, 2, n, m) snapshot array, got {data.shape}")
        if not sample_interval > 0:
            raise DomainError("sample_interval must be positive")
        if t0 < 0:
            raise DomainError("t0 must be non-negative")
        self.data = data
        self.sample_interval = float(sample_interval)
        self.t0 = float(t0)
        self.meta = dict(meta or {})

    @classmethod
    def from_states(cls, states, sample_interval, meta=None):
        states = list(states)
        if not states:
            raise DomainError("need at least one state")
        shapes = {s.shape for s in states}
        if len(shapes) != 1:
            raise DomainError(f"snapshots have differing shapes: {shapes}")
        return cls(np.stack([s.to_array() for s in states]), sample_interval,
                   t0=states[0].time, meta=meta)

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            raise TypeError("use Trajectory.data for slicing")
        i = range(len(self))[i]
        return GridState(self.data[i, 0], self.data[i, 1], float(self.times[i]))

    @property
    def snapshots(self):
        return [self[i] for i in range(len(self))]

    @property
    def times(self):
        return self.t0 + self.sample_interval * np.arange(len(self))

    @property
    def grid_shape(self):
        return self.data.shape[2:]

    def __repr__(self):
        return (f"Trajectory(n_snapshots={len(self)}, grid={self.grid_shape}, "
                f"sample_interval={self.sample_interval})")


def reaction_u(u, v, k):
    return u - u**3 + k - v


def reaction_v(u, v, tau):
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    return (u - v) / tau


def _euler(u, v, p):
    du = reaction_u(u, v, p.k)
    du += p.a * laplacian(u, p.dx)
    dv = u - v
    dv += p.b * laplacian(v, p.dx)
    dv /= p.tau
    return u + p.dt * du, v + p.dt * dv


def _check_finite(u, v, time):
    if np.isfinite(u).all() and np.isfinite(v).all():
        return
    bad = ~(np.isfinite(u) & np.isfinite(v))
    cell = tuple(int(c) for c in np.argwhere(bad)[0])
    raise NumericalBlowupError(f"non-finite state at cell {cell}, t={time:.6g}",
                               cell=cell, time=time)


def step(s, p):
    """One forward-Euler step; returns a new :class:`GridState`."""
    u, v = _euler(s.u, s.v, p)
    _check_finite(u, v, s.time + p.dt)
    return GridState(u, v, s.time + p.dt)


def simulate(init, p, duration, sample_every=1):
    """Integrate for ``duration`` seconds, keeping every ``sample_every``-th state.

    The initial state is always stored, so 25 s at dt = 1e-3 with
    ``sample_every=1000`` yields 26 snapshots.
    """
    if not duration > 0:
        raise DomainError(f"duration must be positive, got {duration}")
    if sample_every < 1:
        raise DomainError(f"sample_every must be >= 1, got {sample_every}")
    n_steps = int(round(duration / p.dt))
    if n_steps < 1:
        raise DomainError("duration shorter than one time step")
    n_samples = n_steps // sample_every
    out = np.empty((n_samples + 1, 2) + init.shape)
    u, v = init.u.copy(), init.v.copy()
    out[0, 0], out[0, 1] = u, v
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, n_samples * sample_every + 1):
            u, v = _euler(u, v, p)
            if it % sample_every == 0:
                _check_finite(u, v, init.time + it * p.dt)
                out[it // sample_every, 0] = u
                out[it // sample_every, 1] = v
    meta = {"params": p.to_dict(), "duration": float(duration),
            "sample_every": int(sample_every)}
    return Trajectory(out, sample_every * p.dt, t0=init.time, meta=meta)


def random_init(seed, n, lo=0.0, hi=1.0):
    """I.i.d. uniform ``[lo, hi]`` initial state from a PCG64 generator."""
    if not lo < hi:
        raise DomainError(f"need lo < hi, got [{lo}, {hi}]")
    if n < 1:
        raise DomainError(f"grid size must be positive, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.uniform(lo, hi, size=(n, n))
    v = rng.uniform(lo, hi, size=(n, n))
    return GridState(u, v, 0.0)


def homogeneous_fixed_point(k=0.005):
    """The homogeneous steady state u = v = k**(1/3)."""
    return float(np.cbrt(k))
