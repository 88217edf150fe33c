"""Input validation helpers shared by the estimators."""
import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DomainError


def check_features(X, n_features=10):
    X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if X.shape[1] != n_features:
        raise DomainError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def check_targets(y, n_samples, n_targets=2):
    y = check_array(y, dtype=np.float64, ensure_2d=False)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if y.shape != (n_samples, n_targets):
        raise DomainError(f"expected targets of shape ({n_samples}, {n_targets}), got {y.shape}")
    return y


def check_design(theta, target):
    """Validate a library matrix and one or more regression targets."""
    theta = check_array(theta, dtype=np.float64)
    target = check_array(target, dtype=np.float64, ensure_2d=False)
    if target.ndim == 1:
        target = target[:, None]
    if target.shape[0] != theta.shape[0]:
        raise DomainError(f"row mismatch: library {theta.shape[0]} vs target {target.shape[0]}")
    return theta, target


def check_nonneg(value, name):
    if not value >= 0:
        raise DomainError(f"{name} must be non-negative, got {value}")
    return value
