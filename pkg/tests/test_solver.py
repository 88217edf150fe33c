import numpy as np
import pytest
from scipy.optimize import brentq

from rdca.exceptions import DomainError, NumericalBlowupError
from rdca.grid import GridState
from rdca.solver import (SimParams, homogeneous_fixed_point, random_init, reaction_u,
                         reaction_v, simulate, step)


def fixed_point_oracle(k):
    # homogeneous steady state: v = u and u - u^3 + k - v = 0
    return brentq(lambda u: k - u**3, 0.0, 1.0, xtol=1e-15)


def test_reaction_u_examples():
    assert reaction_u(0.0, 0.0, 0.0) == 0.0
    assert reaction_u(1.0, 0.0, 0.005) == pytest.approx(0.005, abs=1e-15)
    assert abs(reaction_u(0.1710, 0.1710, 0.005)) < 1e-4


def test_reaction_v_examples():
    assert reaction_v(0.0, 0.0, 0.1) == 0.0
    assert reaction_v(1.0, 0.0, 0.1) == pytest.approx(10.0)
    assert reaction_v(0.3, 0.3, 0.1) == 0.0
    with pytest.raises(DomainError):
        reaction_v(1.0, 0.0, 0.0)


def test_fixed_point_matches_root_finder():
    assert homogeneous_fixed_point(0.005) == pytest.approx(fixed_point_oracle(0.005), abs=1e-12)


@pytest.mark.parametrize("u0", [0.1710, None])
def test_fixed_point_stationary(u0):
    u0 = fixed_point_oracle(0.005) if u0 is None else u0
    p = SimParams.for_grid(8)
    s = GridState(np.full((8, 8), u0), np.full((8, 8), u0))
    s1 = step(s, p)
    assert np.abs(s1.u - u0).max() <= 1e-6
    assert np.abs(s1.v - u0).max() <= 1e-6
    assert s1.time == pytest.approx(p.dt)


def test_rest_state_without_forcing():
    p = SimParams(a=0.0, b=0.0, k=0.0, dx=1.0)
    s = step(GridState(np.zeros((1, 1)), np.zeros((1, 1))), p)
    assert s.u[0, 0] == 0.0 and s.v[0, 0] == 0.0


def test_richardson_half_steps():
    # one Euler step of dt vs two of dt/2: local difference is O(dt^2),
    # so shrinking dt by 2 shrinks the difference by ~4
    s = random_init(3, 16)
    diffs = []
    for dt in (1e-3, 5e-4):
        full = step(s, SimParams.for_grid(16, dt=dt))
        half = SimParams.for_grid(16, dt=dt / 2)
        two = step(step(s, half), half)
        diffs.append(np.abs(full.to_array() - two.to_array()).max())
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.05)


def test_dt_halving_convergence():
    init = random_init(0, 100)
    coarse = simulate(init, SimParams.for_grid(100, dt=1e-3), 1.0, 1000)
    fine = simulate(init, SimParams.for_grid(100, dt=5e-4), 1.0, 2000)
    assert np.abs(coarse.data[-1] - fine.data[-1]).max() < 1e-3


def test_simulate_snapshot_counts():
    p = SimParams.for_grid(8)
    traj = simulate(random_init(0, 8), p, 25.0, 1000)
    assert len(traj) == 26
    assert traj.sample_interval == pytest.approx(1.0)
    np.testing.assert_allclose(traj.times, np.arange(26.0))
    assert len(simulate(random_init(0, 8), p, p.dt, 1)) == 2


def test_simulate_deterministic():
    p = SimParams.for_grid(12)
    a = simulate(random_init(4, 12), p, 0.5, 100)
    b = simulate(random_init(4, 12), p, 0.5, 100)
    assert np.array_equal(a.data, b.data)


def test_patterns_emerge_and_settle():
    traj = simulate(random_init(0, 100), SimParams.for_grid(100), 25.0, 1000)
    assert traj.data[-1, 0].std() > 0.1
    assert np.abs(traj.data[-1] - traj.data[-2]).mean() < 1e-2


def test_random_init_contract():
    a, b = random_init(1, 20), random_init(1, 20)
    assert a == b
    c = random_init(2, 20)
    assert np.mean(a.u != c.u) > 0.99
    s = random_init(5, 20, -0.5, 0.25)
    assert s.u.min() >= -0.5 and s.u.max() <= 0.25
    with pytest.raises(DomainError):
        random_init(0, 4, 1.0, 1.0)


def test_stability_guard():
    with pytest.raises(DomainError):
        SimParams(dx=0.001)
    with pytest.raises(DomainError):
        SimParams(tau=0.0)


def test_blowup_reports_cell():
    p = SimParams(a=0.0, b=0.0, dx=1.0, dt=0.1)
    u = np.zeros((4, 4))
    u[2, 3] = 1e200
    with pytest.raises(NumericalBlowupError) as err:
        simulate(GridState(u, np.zeros((4, 4))), p, 0.5, 1)
    assert err.value.cell == (2, 3)
