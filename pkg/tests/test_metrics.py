import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rdca.exceptions import DegenerateHistogramWarning, DomainError
from rdca.grid import GridState
from rdca.metrics import (compare_states, gaussian_window, hist_accuracy, hist_correlation,
                          mae_accuracy, ssim)

fields = arrays(np.float64, (9, 9), elements=st.floats(-10, 10, allow_nan=False))


def ssim_loop(x, y, L):
    """Per-pixel SSIM with an explicit wrap-around window."""
    w = gaussian_window()
    r = w.shape[0] // 2
    C1, C2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    n, m = x.shape
    total = 0.0
    for i in range(n):
        for j in range(m):
            rows = [(i + a) % n for a in range(-r, r + 1)]
            cols = [(j + b) % m for b in range(-r, r + 1)]
            px, py = x[np.ix_(rows, cols)], y[np.ix_(rows, cols)]
            mx, my = (w * px).sum(), (w * py).sum()
            vx = (w * px * px).sum() - mx * mx
            vy = (w * py * py).sum() - my * my
            cxy = (w * px * py).sum() - mx * my
            total += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx**2 + my**2 + C1) * (vx + vy + C2))
    return total / (n * m)


def test_gaussian_window_normalized():
    w = gaussian_window()
    assert w.shape == (7, 7)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(w, w.T)


def test_ssim_matches_loop(rng):
    x = rng.random((10, 12))
    y = x + 0.3 * rng.random((10, 12))
    L = max(x.max(), y.max()) - min(x.min(), y.min())
    assert ssim(x, y) == pytest.approx(ssim_loop(x, y, L), abs=1e-12)


def test_ssim_constant_fields_closed_form():
    c, L = 0.3, 2.0
    C1 = (0.01 * L) ** 2
    expected = (2 * c * (c + L / 2) + C1) / (c**2 + (c + L / 2) ** 2 + C1)
    got = ssim(np.full((8, 8), c), np.full((8, 8), c + L / 2), dynamic_range=L)
    assert got == pytest.approx(expected, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(fields)
def test_ssim_identity(x):
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(fields, fields)
def test_ssim_symmetric_and_bounded(x, y):
    a, b = ssim(x, y), ssim(y, x)
    assert a == pytest.approx(b, abs=1e-12)
    assert -1 - 1e-12 <= a <= 1 + 1e-12


def test_ssim_shape_mismatch():
    with pytest.raises(DomainError):
        ssim(np.zeros((3, 3)), np.zeros((3, 4)))


def test_hist_correlation_hand_case():
    h1 = np.array([4.0, 0, 0, 0])
    h2 = np.array([0.0, 0, 0, 4])
    # means 1; centred (3,-1,-1,-1) and (-1,-1,-1,3); dot -4; norms 12, so -4 / 12
    assert hist_correlation(h1, h2) == pytest.approx(-1 / 3, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 16, elements=st.floats(0, 100)),
       arrays(np.float64, 16, elements=st.floats(0, 100)))
def test_hist_correlation_matches_opencv(h1, h2):
    if h1.std() == 0 or h2.std() == 0:
        return
    ref = cv2.compareHist(h1.astype(np.float32), h2.astype(np.float32), cv2.HISTCMP_CORREL)
    assert hist_correlation(h1, h2) == pytest.approx(ref, abs=1e-5)


def test_hist_accuracy_matches_opencv_pipeline(rng):
    x, y = rng.normal(size=(32, 32)), rng.normal(0.3, 1.2, size=(32, 32))
    lo, hi = min(x.min(), y.min()), max(x.max(), y.max())
    h = [cv2.calcHist([f.astype(np.float32)], [0], None, [64], [lo, hi + 1e-6]) for f in (x, y)]
    ref = cv2.compareHist(h[0], h[1], cv2.HISTCMP_CORREL)
    assert hist_accuracy(x, y) == pytest.approx(ref, abs=2e-2)


def test_hist_degenerate_flags():
    a = np.full((4, 4), 2.0)
    assert hist_accuracy(a, a.copy()) == 1.0
    with pytest.warns(DegenerateHistogramWarning):
        assert hist_correlation(np.ones(4), np.ones(4)) == 1.0
    with pytest.warns(DegenerateHistogramWarning):
        assert hist_correlation(np.full(4, 3.0), np.array([1.0, 2, 3, 4])) == 0.0


def test_hist_identity_and_permutation(rng):
    x = rng.random((16, 16))
    assert hist_accuracy(x, x) == pytest.approx(1.0, abs=1e-12)
    shuffled = rng.permutation(x.ravel()).reshape(16, 16)
    assert hist_accuracy(x, shuffled) == pytest.approx(1.0, abs=1e-12)
    y = rng.random((16, 16)) ** 2
    perm = rng.permutation(256)
    assert hist_accuracy(x, y) == pytest.approx(
        hist_accuracy(x.ravel()[perm].reshape(16, 16), y.ravel()[perm].reshape(16, 16)),
        abs=1e-12)


def test_mae_accuracy_examples():
    zero = GridState(np.zeros((5, 5)), np.zeros((5, 5)))
    one = GridState(np.ones((5, 5)), np.ones((5, 5)))
    assert mae_accuracy(zero, zero) == 1.0
    assert mae_accuracy(zero, one) == 0.0


@given(st.lists(st.integers(1, 1000), min_size=2, max_size=6, unique=True))
def test_mae_accuracy_strictly_decreasing(steps):
    x = np.linspace(-1, 1, 50).reshape(5, 10)
    scores = [mae_accuracy(x, x + k / 1000) for k in sorted(steps)]
    assert all(a > b for a, b in zip(scores, scores[1:]))


def test_compare_states_identity(rng):
    s = GridState(rng.random((12, 12)), rng.random((12, 12)))
    r = compare_states(s, s)
    for value in r.to_dict().values():
        assert value == pytest.approx(1.0, abs=1e-12)


def test_compare_states_pooling(rng):
    a = GridState(rng.random((12, 12)), rng.random((12, 12)))
    b = GridState(rng.random((12, 12)), 2 * rng.random((12, 12)))
    r = compare_states(a, b)
    assert r.ssim == pytest.approx((r.ssim_u + r.ssim_v) / 2)
    assert r.hist == pytest.approx((r.hist_u + r.hist_v) / 2)
    assert r.mae_accuracy == pytest.approx((r.mae_accuracy_u + r.mae_accuracy_v) / 2)
