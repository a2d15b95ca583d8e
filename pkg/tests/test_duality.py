import numpy as np
import pytest
from scipy.optimize import linprog

import oracles
from weakkam.duality import (AlphaTable, LPGrid, alpha, beta, beta_search, conjugate, convexity_violation,
                             flat_edge, mather_measure_lp, subderivative_interval)
from weakkam.errors import BadInput, SupOnBoundary
from weakkam.lagrangian import OneForm, free_particle, pendulum
from weakkam.lp import simplex


class Table:
    """Stand-in alpha table for a known function of one variable."""

    def __init__(self, f):
        self.f = f

    def __call__(self, c):
        return float(self.f(float(np.atleast_1d(c)[0])))


@pytest.mark.parametrize("seed", range(5))
def test_simplex_matches_highs(seed):
    rng = np.random.default_rng(seed)
    m, n = 6, 15
    A = rng.normal(size=(m, n))
    x0 = rng.random(n)
    b = A @ x0
    c = rng.random(n) + 0.1
    ours = simplex(c, A, b)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert ours.value == pytest.approx(ref.fun, abs=1e-7)
    assert np.all(ours.x >= -1e-12)
    assert np.allclose(A @ ours.x, b, atol=1e-8)


def test_mather_lp_simplex_matches_highs():
    p = pendulum()
    g = LPGrid(32, 33, 4.0, 8)
    a = mather_measure_lp(p, OneForm(np.array([2.0])), g)
    b = mather_measure_lp(p, OneForm(np.array([2.0])), g, solver="highs")
    assert a.lp_value == pytest.approx(b.lp_value, abs=1e-7)


def test_lp_rejects_unknown_solver():
    with pytest.raises(BadInput):
        mather_measure_lp(pendulum(), None, LPGrid(8, 9, 2.0, 2), solver="nope")


@pytest.mark.parametrize("route", ["critical-value", "closed-measure-lp", "inf-max-subsolution"])
def test_free_particle_alpha(route):
    assert alpha(free_particle(1), 1.0, route).value == pytest.approx(0.5, abs=2e-3)


def test_unknown_route():
    with pytest.raises(BadInput):
        alpha(pendulum(), 0.0, "nope")


def test_flat_edge_of_a_known_function():
    t = Table(lambda c: max(0.0, abs(c) - 1.0))
    assert flat_edge(t, 1.0) == pytest.approx(1.0, abs=1e-3)
    assert flat_edge(t, -1.0) == pytest.approx(-1.0, abs=1e-3)
    # a strictly convex alpha has no flat beyond the slope resolution
    assert abs(flat_edge(Table(lambda c: c * c), 1.0)) <= 2e-4


def test_discrete_conjugate_and_convexity():
    xs = np.linspace(-3, 3, 601)
    vals = 0.5 * xs ** 2
    assert conjugate(xs, vals, [1.0])[0] == pytest.approx(0.5, abs=1e-4)
    assert convexity_violation(xs, vals) <= 1e-12
    assert convexity_violation(xs, -vals) > 0


def test_beta_search_on_a_quadratic():
    b = beta_search(AlphaTable(free_particle(1), "inf-max-subsolution"), 0.5)
    assert b.value == pytest.approx(0.125, abs=1e-3)


def test_beta_search_gives_up_beyond_c_max():
    with pytest.raises(SupOnBoundary):
        beta_search(AlphaTable(free_particle(1), "inf-max-subsolution"), 50.0, c_max=2.0)


def test_beta_at_zero_is_zero_on_pendulum():
    tab = AlphaTable(pendulum(), cs=np.arange(-1.5, 1.51, 0.25))
    assert beta(tab.model, 0.0, tab).value == pytest.approx(0.0, abs=2e-3)


@pytest.mark.xfail(strict=True, reason="alpha leaves the flat with a logarithmically vanishing slope, "
                                        "so finite differences cannot resolve the one-sided derivative at the edge")
def test_subderivative_at_flat_edge():
    tab = AlphaTable(pendulum())
    lo, hi = subderivative_interval(tab, oracles.FOUR_OVER_PI)
    assert lo == pytest.approx(0.0, abs=5e-3)
    assert hi == pytest.approx(0.0, abs=5e-3)
