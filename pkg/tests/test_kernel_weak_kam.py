import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from weakkam.errors import BadInput, DegenerateArgmin, NotConverged
from weakkam.kernel import (CACHE_ENV, action_kernel, closure, critical_tables, interp_periodic,
                            min_cycle_mean, minplus)
from weakkam.lagrangian import OneForm, free_particle, pendulum
from weakkam.weak_kam import (GridField, _pick, apply_kernel, lax_oleinik_step, level_drift,
                              solve_weak_kam, subsolution_residual)


@pytest.fixture
def cache(tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    return tmp_path


# min-plus algebra -------------------------------------------------------------------------


def test_minplus_matches_brute_force():
    rng = np.random.default_rng(0)
    A, B = rng.random((7, 7)), rng.random((7, 7))
    C, arg = minplus(A, B)
    ref = np.min(A[:, :, None] + B[None, :, :], axis=1)
    assert np.allclose(C, ref)
    assert np.allclose(A[np.arange(7)[:, None], arg] + B[arg, np.arange(7)[None, :]], C)


def test_closure_and_cycle_mean_on_a_small_graph():
    inf = np.inf
    A = np.array([[inf, 1.0, inf], [inf, inf, 2.0], [-1.5, inf, inf]])
    P = closure(A)
    assert P[0, 2] == 3.0
    assert P[0, 0] == pytest.approx(1.5)
    assert min_cycle_mean(A) == pytest.approx(0.5)


@given(st.floats(-3, 3))
def test_interpolation_is_periodic_and_exact_at_nodes(x):
    row = np.sin(2 * np.pi * np.arange(8) / 8)
    assert interp_periodic(row, x) == pytest.approx(interp_periodic(row, x + 1.0), abs=1e-12)
    assert np.allclose(interp_periodic(row, np.arange(8) / 8), row)


# kernels ------------------------------------------------------------------------------------


def test_free_kernel_is_quadratic_and_cached(cache):
    n, tau, c = 16, 0.125, 0.3
    k = action_kernel(free_particle(1), OneForm(np.array([c])), n=n, tau=tau, substeps=0)
    x = np.arange(n) / n
    d = (x[None, :] - x[:, None] + 0.5) % 1.0 - 0.5
    lifts = (d - 1, d, d + 1)
    ref = np.min([np.where(np.abs(s) <= 0.75, s * s / (2 * tau) - c * s, np.inf) for s in lifts], axis=0)
    assert np.allclose(k.K, ref, atol=1e-9)
    files = list(cache.glob("kernel-*.npy"))
    assert len(files) == 1 and files[0].with_suffix(".json").exists()
    again = action_kernel(free_particle(1), OneForm(np.array([c])), n=n, tau=tau, substeps=0)
    assert np.array_equal(again.K, k.K)


def test_squared_kernel_is_the_longer_kernel(cache):
    k0 = action_kernel(free_particle(1), None, n=16, tau=0.125, substeps=0)
    k1 = action_kernel(free_particle(1), None, n=16, tau=0.25, substeps=1)
    assert np.allclose(k1.K, minplus(k0.K, k0.K)[0])
    x = np.arange(16) / 16
    d = (x[None, :] - x[:, None] + 0.5) % 1.0 - 0.5
    exact = d * d / 0.5
    # grid midpoints can only cost more; even offsets have an exact midpoint
    assert np.all(k1.K >= exact - 1e-12)
    even = (np.round(d * 16) % 2) == 0
    assert np.allclose(k1.K[even], exact[even], atol=1e-9)


def test_kernels_need_one_dimension(cache):
    with pytest.raises(BadInput):
        action_kernel(free_particle(2), None, n=8, tau=0.1)


def test_critical_tables_of_the_pendulum(cache):
    t = critical_tables(pendulum(), None, n=32, tau=0.125)
    assert t.alpha == pytest.approx(0.0, abs=1e-9)
    assert list(t.critical) == [0]
    # potential from the fixed point to 1/2 against the separatrix action
    assert t.phi[0, 16] == pytest.approx(oracles.TWO_OVER_PI, abs=5e-3)
    i, j, k = np.random.default_rng(0).integers(0, 32, (3, 500))
    assert np.max(t.phi[i, k] - t.phi[i, j] - t.phi[j, k]) <= 1e-9
    assert np.all(t.barrier >= t.phi - 1e-12)


# Lax-Oleinik --------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def pendulum_kernel():
    return action_kernel(pendulum(), None, n=64, tau=1.0)


def test_lax_oleinik_properties(pendulum_kernel):
    rng = np.random.default_rng(1)
    K = pendulum_kernel.K
    for _ in range(10):
        u = rng.normal(size=64)
        w = u + np.abs(rng.normal(size=64))
        z = rng.normal(size=64)
        a = rng.normal()
        assert np.all(apply_kernel(K, u) <= apply_kernel(K, w))
        assert np.max(np.abs(apply_kernel(K, u) - apply_kernel(K, z))) <= np.max(np.abs(u - z)) + 1e-12
        assert np.allclose(apply_kernel(K, u + a), apply_kernel(K, u) + a)


def test_lax_oleinik_step_wraps_fields(pendulum_kernel):
    u = GridField.zeros(64)
    assert lax_oleinik_step(pendulum(), None, u, kernel=pendulum_kernel).n == 64
    with pytest.raises(BadInput):
        lax_oleinik_step(pendulum(), None, u, tau=0.0)


def test_weak_kam_solution_of_the_pendulum():
    sol = solve_weak_kam(pendulum(), None, n=64)
    assert sol.residual <= 1e-3
    assert sol.alpha_estimate == pytest.approx(0.0, abs=2e-3)
    assert sol.u.values[32] - sol.u.values[0] == pytest.approx(oracles.TWO_OVER_PI, abs=1e-2)
    res, field, kink = subsolution_residual(pendulum(), None, sol.u, sol.alpha_estimate)
    assert res <= 5e-2
    assert kink[32] and not kink[0]


def test_only_the_critical_level_has_bounded_iterates():
    for k in (-0.5, 0.0, 0.5):
        assert level_drift(pendulum(), None, k, sweeps=20, n=64) == pytest.approx(k, abs=0.05)


def test_iteration_budget_is_reported():
    u0 = GridField(np.sin(2 * np.pi * np.arange(64) / 64) * 5)
    with pytest.raises(NotConverged) as e:
        solve_weak_kam(pendulum(), None, n=64, tol=1e-14, max_sweeps=2, u0=u0)
    assert len(e.value.history) == 2


def test_ties_warn():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        i, tie = _pick(np.array([1.0, 0.0, 0.0]), 1e-9, "test")
    assert i == 1 and tie == [1, 2]
    assert any(issubclass(x.category, DegenerateArgmin) for x in w)


def test_grid_field_norms():
    f = GridField.from_function(lambda x: np.sin(2 * np.pi * x), 256)
    assert f.sup_norm() == pytest.approx(1.0, abs=1e-3)
    assert f.lipschitz() == pytest.approx(2 * np.pi, rel=1e-3)
    with pytest.raises(BadInput):
        GridField([np.nan, 0.0])
