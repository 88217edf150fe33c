"""Similarity metrics between observed and predicted states."""
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate

from .exceptions import DegenerateHistogramWarning, DomainError

__all__ = [
    "MetricReport",
    "ssim",
    "hist_correlation",
    "hist_accuracy",
    "mae_accuracy",
    "compare_states",
    "gaussian_window",
]

K1, K2 = 0.01, 0.03
WINDOW_SIZE = 7
WINDOW_SIGMA = 1.5
DEFAULT_BINS = 64


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DomainError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def gaussian_window(size=WINDOW_SIZE, sigma=WINDOW_SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(x, y, dynamic_range=None):
    """Mean structural similarity over Gaussian-weighted 7x7 windows.

    Windows wrap around the grid edges. ``dynamic_range`` defaults to
    ``max - min`` over both fields together.
    """
    x, y = _pair(x, y)
    if np.array_equal(x, y):
        return 1.0
    if dynamic_range is None:
        dynamic_range = max(x.max(), y.max()) - min(x.min(), y.min())
    if not dynamic_range > 0:
        raise DomainError(f"dynamic_range must be positive, got {dynamic_range}")
    c1 = (K1 * dynamic_range) ** 2
    c2 = (K2 * dynamic_range) ** 2
    w = gaussian_window()

    def filt(f):
        return correlate(f, w, mode="wrap")

    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    # windows whose stabilizers underflowed (range near the smallest floats)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(den > 0, num / den, 1.0)
    return float(np.mean(ratio))


def hist_correlation(h1, h2):
    """Correlation between two histograms (bin counts).

    When either histogram has zero variance the correlation is undefined;
    the result is then 1.0 for identical histograms and 0.0 otherwise, and a
    :class:`DegenerateHistogramWarning` is issued.
    """
    h1, h2 = _pair(h1, h2)
    d1 = h1 - h1.mean()
    d2 = h2 - h2.mean()
    den = np.sqrt(np.sum(d1 * d1) * np.sum(d2 * d2))
    if den == 0:
        warnings.warn("zero-variance histogram; correlation substituted",
                      DegenerateHistogramWarning, stacklevel=2)
        return 1.0 if np.array_equal(h1, h2) else 0.0
    return float(np.sum(d1 * d2) / den)


def hist_accuracy(x, y, bins=DEFAULT_BINS, range=None):
    """Histogram correlation of two fields over a shared equal-width binning."""
    x, y = _pair(x, y)
    if bins < 2:
        raise DomainError(f"bins must be >= 2, got {bins}")
    if range is None:
        lo, hi = min(x.min(), y.min()), max(x.max(), y.max())
        if hi == lo:
            hi = lo + 1.0
    else:
        lo, hi = range
    if not lo < hi:
        raise DomainError(f"need lo < hi, got ({lo}, {hi})")
    h1, _ = np.histogram(x, bins=bins, range=(lo, hi))
    h2, _ = np.histogram(y, bins=bins, range=(lo, hi))
    return hist_correlation(h1.astype(np.float64), h2.astype(np.float64))


def mae_accuracy(x, y):
    """``1 - mean|x - y|`` over all cells and both species.

    Accepts :class:`~rdca.grid.GridState` objects or arrays.
    """
    x = x.to_array() if hasattr(x, "to_array") else x
    y = y.to_array() if hasattr(y, "to_array") else y
    x, y = _pair(x, y)
    return float(1.0 - np.mean(np.abs(x - y)))


@dataclass
class MetricReport:
    """Pooled metrics plus per-species values.

    Pooled SSIM and HIST are the mean of the u and v values; pooled MAE
    accuracy uses every cell of both species.
    """

    ssim: float
    hist: float
    mae_accuracy: float
    ssim_u: float
    ssim_v: float
    hist_u: float
    hist_v: float
    mae_accuracy_u: float
    mae_accuracy_v: float

    def to_dict(self):
        return asdict(self)


def compare_states(observed, predicted, bins=DEFAULT_BINS):
    """All three metrics for two :class:`~rdca.grid.GridState` objects."""
    if observed.shape != predicted.shape:
        raise DomainError(f"shape mismatch: {observed.shape} vs {predicted.shape}")
    s_u = ssim(observed.u, predicted.u)
    s_v = ssim(observed.v, predicted.v)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateHistogramWarning)
        h_u = hist_accuracy(observed.u, predicted.u, bins)
        h_v = hist_accuracy(observed.v, predicted.v, bins)
    return MetricReport(
        ssim=(s_u + s_v) / 2,
        hist=(h_u + h_v) / 2,
        mae_accuracy=mae_accuracy(observed, predicted),
        ssim_u=s_u,
        ssim_v=s_v,
        hist_u=h_u,
        hist_v=h_v,
        mae_accuracy_u=mae_accuracy(observed.u, predicted.u),
        mae_accuracy_v=mae_accuracy(observed.v, predicted.v),
    )
