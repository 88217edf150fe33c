"""Sparse identification of the governing reaction-diffusion equations.

The candidate library has 18 fixed columns: the two Laplacians, a constant,
and monomials ``u**i * v**j`` with ``i, j <= 3`` as listed in :data:`TERMS`.
Coefficients are fitted by sequentially thresholded least squares.
"""
import csv
import warnings
from importlib import resources
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_design, check_nonneg
from .exceptions import DomainError, RankDeficiencyWarning
from .grid import laplacian

__all__ = [
    "TERMS",
    "TARGETS",
    "PDELibrary",
    "STLSQ",
    "CoeffTable",
    "build_library",
    "estimate_derivatives",
    "stlsq",
    "identify",
    "identify_pairs",
    "reference_table",
]

TERMS = ("lap_u", "lap_v", "1", "u", "v", "u^2", "v^2", "uv", "u^2v", "uv^2",
         "u^2v^2", "u^3", "v^3", "uv^3", "u^3v", "u^3v^2", "u^2v^3", "u^3v^3")
TARGETS = ("u_dot", "v_dot")

# (power of u, power of v) for every monomial column after the Laplacians
_MONOMIALS = ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1), (2, 1), (1, 2), (2, 2),
              (3, 0), (0, 3), (1, 3), (3, 1), (3, 2), (2, 3), (3, 3))


def _as_state_array(states):
    """Accept a list of GridState, a Trajectory, or a ``(T, 2, n, m)`` array."""
    if hasattr(states, "data") and hasattr(states, "sample_interval"):
        return states.data
    if isinstance(states, np.ndarray):
        arr = states.astype(np.float64, copy=False)
    else:
        states = list(states)
        if not states:
            raise DomainError("need at least one state")
        arr = np.stack([s.to_array() for s in states])
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != 2 or len(arr) == 0:
        raise DomainError(f"expected (T, 2, n, m) states, got shape {arr.shape}")
    return arr


def build_library(states, dx):
    """Library matrix with one row per (snapshot, cell) and 18 columns."""
    x = _as_state_array(states)
    u = x[:, 0]
    v = x[:, 1]
    cols = [laplacian(u, dx), laplacian(v, dx)]
    upow = [np.ones_like(u), u, u * u, u * u * u]
    vpow = [np.ones_like(v), v, v * v, v * v * v]
    cols.extend(upow[i] * vpow[j] for i, j in _MONOMIALS)
    return np.stack([c.ravel() for c in cols], axis=1)


class PDELibrary(BaseEstimator, TransformerMixin):
    """Transformer wrapping :func:`build_library` for ``(T, 2, n, m)`` input."""

    def __init__(self, dx=0.02):
        self.dx = dx

    def fit(self, X, y=None):
        if not self.dx > 0:
            raise DomainError(f"dx must be positive, got {self.dx}")
        self.n_output_features_ = len(TERMS)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_output_features_")
        return build_library(X, self.dx)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(TERMS, dtype=object)


def estimate_derivatives(traj):
    """Forward differences ``(X(t+1) - X(t)) / interval`` assigned to time t.

    Returns an array of shape ``(len(traj) - 1, 2, n, m)``; the last
    snapshot has no derivative.
    """
    if len(traj) < 2:
        raise DomainError("need at least two snapshots to estimate derivatives")
    return np.diff(traj.data, axis=0) / traj.sample_interval


def _lstsq(theta, y, ridge):
    n_rows, n_cols = theta.shape
    if ridge > 0:
        # penalty on the mean-squared residual, so ridge does not scale with row count
        a = np.vstack([theta, np.sqrt(ridge * n_rows) * np.eye(n_cols)])
        b = np.concatenate([y, np.zeros(n_cols)])
    else:
        a, b = theta, y
    coef, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    return coef, rank < n_cols


def stlsq(theta, target, threshold=0.1, ridge=0.0, max_iter=20):
    """Sequentially thresholded (ridge) least squares for one target.

    Each pass minimizes ``mean((theta @ c - y)**2) + ridge * |c|**2`` on the
    current support, then zeroes every coefficient with ``|c| < threshold``
    at once, until the support stops changing. A zeroed column never returns. A
    rank-deficient refit falls back to the least-norm solution and warns.
    """
    theta, target = check_design(theta, target)
    if target.shape[1] != 1:
        raise DomainError("stlsq fits a single target; use STLSQ for several")
    y = target[:, 0]
    check_nonneg(threshold, "threshold")
    check_nonneg(ridge, "ridge")
    n_rows, n_cols = theta.shape
    if n_rows < n_cols:
        raise DomainError(f"need at least as many rows as columns ({n_rows} < {n_cols})")
    coef = np.zeros(n_cols)
    support = np.ones(n_cols, dtype=bool)
    deficient = False
    for _ in range(max_iter + 1):
        if not support.any():
            return np.zeros(n_cols)
        c, deficient = _lstsq(theta[:, support], y, ridge)
        coef = np.zeros(n_cols)
        coef[support] = c
        new_support = support & (np.abs(coef) >= threshold)
        if np.array_equal(new_support, support):
            break
        support = new_support
    coef[~support] = 0.0
    if deficient:
        warnings.warn("rank-deficient least squares on the surviving support; "
                      "least-norm solution returned", RankDeficiencyWarning, stacklevel=2)
    return coef


class STLSQ(BaseEstimator, RegressorMixin):
    """Sparse linear regressor; each target column is fitted independently.

    Attributes
    ----------
    coef_ : ndarray of shape (n_targets, n_features)
    """

    def __init__(self, threshold=0.1, ridge=0.0, max_iter=20):
        self.threshold = threshold
        self.ridge = ridge
        self.max_iter = max_iter

    def fit(self, X, y):
        X, Y = check_design(X, y)
        self.coef_ = np.stack([stlsq(X, Y[:, k], self.threshold, self.ridge, self.max_iter)
                               for k in range(Y.shape[1])])
        self.n_features_in_ = X.shape[1]
        self._single_target = np.ndim(y) == 1
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        out = np.asarray(X, dtype=np.float64) @ self.coef_.T
        return out[:, 0] if self._single_target else out


@dataclass
class CoeffTable:
    """Fitted coefficients; row ``i`` is ``TERMS[i]``, columns (u_dot, v_dot)."""

    coeffs: np.ndarray
    threshold: float = 0.0
    ridge: float = 0.0
    source: str = "observables"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (len(TERMS), 2):
            raise DomainError(f"coeffs must be ({len(TERMS)}, 2), got {self.coeffs.shape}")

    def __getitem__(self, key):
        """``table["u", "u_dot"]`` style lookup."""
        term, target = key
        return float(self.coeffs[TERMS.index(term), TARGETS.index(target)])

    def support(self, target="u_dot"):
        col = self.coeffs[:, TARGETS.index(target)]
        return {t for t, c in zip(TERMS, col) if c != 0}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# source={self.source}\n")
            fh.write(f"# threshold={self.threshold!r}\n")
            fh.write(f"# ridge={self.ridge!r}\n")
            for key in sorted(self.meta):
                fh.write(f"# {key}={self.meta[key]!r}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["term", "coeff_u_dot", "coeff_v_dot"])
            for term, (cu, cv) in zip(TERMS, self.coeffs):
                w.writerow([term, repr(float(cu)), repr(float(cv))])

    @classmethod
    def from_csv(cls, path):
        meta = {}
        rows = []
        with open(path, newline="") as fh:
            for line in fh:
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    meta[key] = value
                else:
                    rows.append(line)
        reader = csv.DictReader(rows)
        coeffs = np.zeros((len(TERMS), 2))
        seen = []
        for row in reader:
            i = TERMS.index(row["term"])
            coeffs[i] = float(row["coeff_u_dot"]), float(row["coeff_v_dot"])
            seen.append(row["term"])
        if seen != list(TERMS):
            raise DomainError(f"{path}: terms must be exactly {TERMS} in order")

        def num(key):
            return float(meta.pop(key)) if key in meta else 0.0

        source = meta.pop("source", "observables")
        threshold, ridge = num("threshold"), num("ridge")
        return cls(coeffs, threshold, ridge, source, meta)


def _sampled_rows(before, after, interval, dx, max_rows, seed):
    """Library rows and derivatives for a seeded subset of (snapshot, cell) rows."""
    n_snap = len(before)
    n_cells = int(np.prod(before.shape[2:]))
    n_rows = n_snap * n_cells
    if n_rows > max_rows:
        keep = np.sort(np.random.default_rng(seed).choice(n_rows, max_rows, replace=False))
    else:
        keep = np.arange(n_rows)
    theta = np.empty((len(keep), len(TERMS)))
    ydot = np.empty((len(keep), 2))
    chunk = max(1, 200_000 // n_cells)
    bounds = np.searchsorted(keep, np.arange(0, n_snap + chunk, chunk) * n_cells)
    for k, lo in enumerate(range(0, n_snap, chunk)):
        a, b = bounds[k], bounds[k + 1]
        if a == b:
            continue
        rows = keep[a:b] - lo * n_cells
        theta[a:b] = build_library(before[lo:lo + chunk], dx)[rows]
        d = (after[lo:lo + chunk] - before[lo:lo + chunk]) / interval
        ydot[a:b] = d.transpose(1, 0, 2, 3).reshape(2, -1)[:, rows].T
    return theta, ydot, n_rows


def identify_pairs(before, after, interval, dx, threshold=0.15, ridge=1e-3,
                   max_rows=500_000, seed=0, source="observables"):
    """Fit u_dot and v_dot from snapshot pairs separated by ``interval``.

    Derivatives are forward differences. The two Laplacian columns are
    scaled to unit RMS before fitting, so their threshold applies to the
    typical size of the diffusion contribution; monomial columns stay in
    raw units. Rows beyond ``max_rows`` are dropped by seeded uniform
    subsampling.
    """
    before = _as_state_array(before)
    after = _as_state_array(after)
    if before.shape != after.shape:
        raise DomainError("before/after snapshot arrays differ in shape")
    if not interval > 0:
        raise DomainError(f"interval must be positive, got {interval}")
    theta, ydot, n_rows = _sampled_rows(before, after, interval, dx, max_rows, seed)
    col_scale = np.ones(len(TERMS))
    lap_rms = np.sqrt(np.mean(theta[:, :2] ** 2, axis=0))
    col_scale[:2] = np.where(lap_rms > 0, lap_rms, 1.0)
    theta /= col_scale
    coeffs = np.zeros((len(TERMS), 2))
    for k in range(2):
        coeffs[:, k] = stlsq(theta, ydot[:, k], threshold, ridge) / col_scale
    meta = {"n_rows": int(len(theta)), "n_rows_total": int(n_rows), "max_rows": int(max_rows),
            "seed": int(seed), "interval": float(interval), "dx": float(dx)}
    return CoeffTable(coeffs, threshold, ridge, source, meta)


def identify(trajs, dx, threshold=0.15, ridge=1e-3, max_rows=500_000, seed=0,
             source="observables"):
    """Fit the 18-term library to every consecutive pair of every trajectory."""
    trajs = list(trajs)
    if not trajs:
        raise DomainError("need at least one trajectory")
    if len({t.grid_shape for t in trajs}) != 1 or len({t.sample_interval for t in trajs}) != 1:
        raise DomainError("trajectories must share grid size and sample interval")
    for t in trajs:
        if len(t) < 2:
            raise DomainError("every trajectory needs at least two snapshots")
    before = np.concatenate([t.data[:-1] for t in trajs])
    after = np.concatenate([t.data[1:] for t in trajs])
    return identify_pairs(before, after, trajs[0].sample_interval, dx, threshold, ridge,
                          max_rows, seed, source)


REFERENCES = ("generator", "observables", "learned_ca")


def reference_table(name):
    """Bundled reference coefficients: the generating equations, or reference
    fits to observables and to learned-CA rollouts."""
    if name not in REFERENCES:
        raise DomainError(f"unknown reference {name!r}; choose from {REFERENCES}")
    with resources.as_file(resources.files("rdca") / "reference" / f"{name}.csv") as path:
        return CoeffTable.from_csv(path)
