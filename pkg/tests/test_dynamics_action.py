import numpy as np
import pytest

import oracles
from weakkam.action import (MINUS_INFINITY, mane_critical_value, mane_potential, min_action_over_windings,
                            minimize_action_fixed_time, peierls_barrier, delta_pseudometric)
from weakkam.dynamics import (OccupationMeasure, closedness_defect, hamilton_residual, integrate_el_flow,
                              occupation_measure, rotation_vector_of_orbit)
from weakkam.errors import BadInput, EnergyDriftExceeded
from weakkam.lagrangian import OneForm, free_particle, pendulum
from weakkam.paths import discrete_action
from weakkam.torus import TrigSeries

ZERO = OneForm(np.zeros(1))


# flow ------------------------------------------------------------------------------------


def test_energy_is_conserved():
    o = integrate_el_flow(pendulum(), [0.1], [1.0], 10.0)
    assert o.drift < 1e-8


def test_coarse_step_breaks_the_drift_bound():
    with pytest.raises(EnergyDriftExceeded):
        integrate_el_flow(pendulum(), [0.0], [0.5], 20.0, dt=0.2)


def test_free_orbit_rotation_vector():
    o = integrate_el_flow(free_particle(2), [0.0, 0.0], [0.3, -0.7], 5.0)
    assert np.allclose(rotation_vector_of_orbit(o), [0.3, -0.7])


def test_hamilton_residual_is_second_order():
    r = [max(hamilton_residual(pendulum(), integrate_el_flow(pendulum(), [0.2], [0.5], 2.0, dt=dt)))
         for dt in (2e-3, 1e-3)]
    assert r[1] < 1e-3
    assert 3.5 < r[0] / r[1] < 4.5


def test_closedness_defect_decays_like_one_over_t():
    f = TrigSeries(np.array([[1]]), sin=np.array([1.0]))
    vals = []
    for T in (5.0, 10.0, 20.0):
        o = integrate_el_flow(pendulum(), [0.0], [2.5], T, dt=2e-3)
        vals.append(T * abs(closedness_defect(occupation_measure(o), f)))
    assert max(vals) <= 2.0 + 1e-3


def test_occupation_measure_normalizes_and_rejects_negative_weights():
    m = OccupationMeasure(np.zeros((2, 1)), np.ones((2, 1)), [1.0, 3.0])
    assert m.w.sum() == pytest.approx(1.0)
    with pytest.raises(BadInput):
        OccupationMeasure(np.zeros((1, 1)), np.ones((1, 1)), [-1.0])


# fixed-time minimizers ---------------------------------------------------------------------


def test_free_particle_minimizer_is_straight():
    path, a = minimize_action_fixed_time(free_particle(1), ZERO, [0.1], [0.4], [1], 2.0)
    d = 1.3
    assert a == pytest.approx(d * d / 4.0, rel=1e-8)
    assert np.allclose(np.diff(path.nodes[:, 0]), d / (len(path.nodes) - 1), atol=1e-9)


def test_exact_gauge_changes_action_by_boundary_terms():
    p = pendulum()
    f = TrigSeries(np.array([[1]]), sin=np.array([0.2]))
    eta = OneForm(np.array([0.0]), f)
    _, a0 = minimize_action_fixed_time(p, ZERO, [0.1], [0.6], [0], 1.0)
    _, a1 = minimize_action_fixed_time(p, eta, [0.1], [0.6], [0], 1.0)
    jump = float(f.value(np.array([[0.6]]))[0] - f.value(np.array([[0.1]]))[0])
    assert a1 == pytest.approx(a0 - jump, abs=1e-10)


def test_bad_horizon_is_rejected():
    with pytest.raises(BadInput):
        minimize_action_fixed_time(pendulum(), ZERO, [0.0], [0.5], [0], -1.0)


def _lattice_dp(model, x0, x1, T, steps, h, lo, hi):
    """Brute-force DP over a position lattice with the midpoint rule."""
    grid = np.arange(lo, hi + h / 2, h)
    dt = T / steps
    mid = 0.5 * (grid[:, None] + grid[None, :])
    slope = (grid[None, :] - grid[:, None]) / dt
    step = dt * model.L(mid.reshape(-1, 1), slope.reshape(-1, 1)).reshape(len(grid), len(grid))
    cost = np.full(len(grid), np.inf)
    cost[np.argmin(np.abs(grid - x0))] = 0.0
    for _ in range(steps):
        cost = np.min(cost[:, None] + step, axis=0)
    return cost[np.argmin(np.abs(grid - x1))]


def test_minimizer_matches_lattice_dp():
    p = pendulum()
    T, steps = 0.6, 12
    path, a = minimize_action_fixed_time(p, ZERO, [0.1], [0.45], [0], T, N=steps)
    assert a == pytest.approx(discrete_action(p, path.nodes, T), abs=1e-12)
    dp = _lattice_dp(p, 0.1, 0.45, T, steps, 1.0 / 800, -0.2, 0.8)
    # the lattice only restricts nodes, so it can only be worse, and by O(h^2 / dt)
    assert a <= dp + 1e-12
    assert dp - a < 5e-3


def test_windings_are_searched():
    a = min_action_over_windings(free_particle(1), ZERO, [0.9], [0.1], 1.0, winding_radius=1)
    assert a == pytest.approx(0.5 * 0.2 ** 2, rel=1e-8)


# potentials ----------------------------------------------------------------------------------


def test_critical_value_of_pendulum_at_zero_and_two():
    assert float(mane_critical_value(pendulum(), ZERO)) == pytest.approx(0.0, abs=1e-4)
    a2 = float(mane_critical_value(pendulum(), OneForm(np.array([2.0]))))
    assert a2 == pytest.approx(oracles.FROZEN["energy_of_class(2)"], abs=5e-3)


def test_free_potential_is_distance_times_speed():
    pv = mane_potential(free_particle(1), ZERO, 0.5, [0.0], [0.3])
    assert pv.value == pytest.approx(0.3, abs=1e-4)


def test_potential_below_critical_level_is_minus_infinity():
    pv = mane_potential(pendulum(), ZERO, -0.5, [0.0], [0.5])
    assert pv.value == MINUS_INFINITY
    assert pv.witness["action"] < 0


def test_barrier_is_symmetric_at_zero_class():
    h1 = float(peierls_barrier(pendulum(), ZERO, 0.0, [0.0], [0.5]))
    h2 = float(peierls_barrier(pendulum(), ZERO, 0.0, [0.5], [0.0]))
    assert h1 == pytest.approx(oracles.TWO_OVER_PI, abs=5e-3)
    assert h1 == pytest.approx(h2, abs=1e-6)


def test_delta_pseudometric_sums_both_barriers():
    d = delta_pseudometric(pendulum(), ZERO, 0.0, [0.0], [0.5])
    assert d == pytest.approx(oracles.FOUR_OVER_PI, abs=1e-2)
    assert delta_pseudometric(pendulum(), ZERO, 0.0, [0.0], [0.0]) == pytest.approx(0.0, abs=2e-3)
