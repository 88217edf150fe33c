"""Periodic 2-D grids, five-point neighborhoods and the discrete Laplacian.

A field is a 2-D float64 array (row-major, so index ``(i, j)`` maps to
``i * n_cols + j`` in the flat buffer). A :class:`GridState` pairs the
activator ``u`` and inhibitor ``v`` fields with a simulation time.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import DomainError

__all__ = [
    "Boundary",
    "GridState",
    "NeighborhoodSample",
    "wrap_index",
    "laplacian",
    "neighborhood",
    "neighbor_stack",
    "stencil_features",
]


class Boundary(Enum):
    PERIODIC = "periodic"


def as_field(values, name="field"):
    """Validate ``values`` as a finite 2-D float64 field."""
    f = np.asarray(values, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
        raise DomainError(f"{name} must be a non-empty 2-D array, got shape {f.shape}")
    if not np.isfinite(f).all():
        raise DomainError(f"{name} contains non-finite values")
    return f


@dataclass(frozen=True, eq=False)
class GridState:
    """Paired (u, v) fields at a given time; the system state X(t)."""

    u: np.ndarray
    v: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        u = as_field(self.u, "u")
        v = as_field(self.v, "v")
        if u.shape != v.shape:
            raise DomainError(f"u and v shapes differ: {u.shape} vs {v.shape}")
        if not self.time >= 0:
            raise DomainError(f"time must be >= 0, got {self.time}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "time", float(self.time))

    @property
    def shape(self):
        return self.u.shape

    def to_array(self):
        """Stack as a ``(2, n_rows, n_cols)`` array."""
        return np.stack([self.u, self.v])

    @classmethod
    def from_array(cls, arr, time=0.0):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise DomainError(f"expected a (2, n, m) array, got shape {arr.shape}")
        return cls(arr[0], arr[1], time)

    def __eq__(self, other):
        if not isinstance(other, GridState):
            return NotImplemented
        return (
            self.time == other.time
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
        )


@dataclass(frozen=True)
class NeighborhoodSample:
    """A cell and its four neighbors, each a ``(u, v)`` 2-vector."""

    cell: np.ndarray
    up: np.ndarray
    bottom: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def neighbors(self):
        """The 8-vector ``[up, bottom, left, right]`` with (u, v) per neighbor."""
        return np.concatenate([self.up, self.bottom, self.left, self.right])


def wrap_index(i, n):
    """Map a signed index onto ``[0, n)`` periodically."""
    if n <= 0:
        raise DomainError(f"grid size must be positive, got {n}")
    return ((i % n) + n) % n


def laplacian(f, dx):
    """Five-point Laplacian with periodic wrapping."""
    if not dx > 0:
        raise DomainError(f"dx must be positive, got {dx}")
    f = np.asarray(f, dtype=np.float64)
    out = np.roll(f, 1, axis=-2)
    out += np.roll(f, -1, axis=-2)
    out += np.roll(f, 1, axis=-1)
    out += np.roll(f, -1, axis=-1)
    out -= 4.0 * f
    out /= dx * dx
    return out


def neighborhood(state, i, j):
    """Return the five-point neighborhood of cell ``(i, j)``."""
    n_rows, n_cols = state.shape
    if not (0 <= i < n_rows and 0 <= j < n_cols):
        raise DomainError(f"cell ({i}, {j}) outside a {n_rows}x{n_cols} grid")
    x = state.to_array()

    def at(r, c):
        return x[:, wrap_index(r, n_rows), wrap_index(c, n_cols)].copy()

    return NeighborhoodSample(
        cell=at(i, j),
        up=at(i - 1, j),
        bottom=at(i + 1, j),
        left=at(i, j - 1),
        right=at(i, j + 1),
    )


def neighbor_stack(x):
    """Neighbor values for every cell of a ``(..., 2, n, m)`` state array.

    Returns an array of shape ``(..., 8, n, m)`` ordered
    ``[up_u, up_v, bottom_u, bottom_v, left_u, left_v, right_u, right_v]``.
    """
    x = np.asarray(x, dtype=np.float64)
    up = np.roll(x, 1, axis=-2)
    bottom = np.roll(x, -1, axis=-2)
    left = np.roll(x, 1, axis=-1)
    right = np.roll(x, -1, axis=-1)
    return np.concatenate([up, bottom, left, right], axis=-3)


def stencil_features(x):
    """Per-cell network inputs for a ``(2, n, m)`` state array.

    Returns ``(n*m, 10)`` rows: the cell's (u, v) followed by the 8 neighbor
    values in :func:`neighbor_stack` order, cells in row-major order.
    """
    x = np.asarray(x, dtype=np.float64)
    feats = np.concatenate([x, neighbor_stack(x)], axis=0)
    return np.ascontiguousarray(feats.reshape(10, -1).T)
