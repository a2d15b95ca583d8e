import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weakkam.errors import ModelAuditError
from weakkam.lagrangian import (BUILTIN_MODELS, OneForm, ReversedLagrangian, ShiftedLagrangian,
                                builtin_model, fenchel_hamiltonian, free_particle, load_model,
                                model_from_dict, pendulum)
from weakkam.torus import TrigSeries, minimal_image, torus_distance, wrap

floats = st.floats(-50, 50, allow_nan=False)


@given(floats)
def test_wrap_lands_in_unit_interval(x):
    w = wrap(np.array([x]))
    assert 0.0 <= w[0] < 1.0
    assert abs((x - w[0]) - round(x - w[0])) < 1e-9


@given(floats)
def test_minimal_image_range(dx):
    m = minimal_image(np.array([dx]))[0]
    assert -0.5 <= m < 0.5


def test_torus_distance_wraps():
    assert torus_distance(np.array([0.05]), np.array([0.95])) == pytest.approx(0.1)


def test_trig_series_gradient_matches_differences():
    f = TrigSeries(np.array([[1, 0], [1, 2]]), cos=np.array([0.3, -0.2]), sin=np.array([0.1, 0.4]))
    x = np.random.default_rng(0).random((20, 2))
    h = 1e-6
    g = f.grad(x)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (f.value(x + e) - f.value(x - e)) / (2 * h)
        assert np.allclose(g[:, i], fd, atol=1e-7)


def test_trig_series_is_periodic_and_round_trips():
    f = TrigSeries(np.array([[1], [3]]), cos=np.array([0.5, 0.0]), sin=np.array([0.0, 0.25]), const=1.0)
    x = np.linspace(0, 1, 7)[:, None]
    assert np.allclose(f.value(x), f.value(x + 1.0))
    g = TrigSeries.from_dict(f.to_dict(), 1)
    assert np.allclose(g.value(x), f.value(x))
    assert f.mean() == pytest.approx(1.0)


@pytest.mark.parametrize("name", BUILTIN_MODELS)
def test_builtin_models_load(name):
    m = builtin_model(name)
    x = np.full((1, m.dim), 0.3)
    v = np.ones((1, m.dim))
    assert np.isfinite(m.L(x, v)).all()


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(-5, 5), st.floats(-5, 5))
def test_fenchel_inequality_with_equality_on_legendre(x, v, q):
    m = pendulum()
    X, V, Q = np.array([[x]]), np.array([[v]]), np.array([[q]])
    assert m.L(X, V)[0] + m.H(X, Q)[0] - q * v >= -1e-10
    P = m.L_v(X, V)
    assert m.L(X, V)[0] + m.H(X, P)[0] - P[0, 0] * v == pytest.approx(0.0, abs=1e-10)


def test_hamiltonian_by_sup_agrees_with_closed_form():
    m = pendulum()
    x = np.array([[0.2]])
    p = np.array([[0.7]])
    assert fenchel_hamiltonian(m, x, p) == pytest.approx(m.H(x, p)[0], abs=1e-8)


def test_legendre_round_trip():
    m = pendulum()
    rng = np.random.default_rng(1)
    x, v = rng.random((50, 1)), rng.normal(0, 3, (50, 1))
    assert np.allclose(m.velocity_of_momentum(x, m.L_v(x, v)), v, atol=1e-10)


def test_energy_of_pendulum():
    m = pendulum()
    x, v = np.array([[0.5]]), np.array([[1.0]])
    assert m.energy(x, v)[0] == pytest.approx(0.5 - 2.0)


def test_closed_form_line_integral():
    f = TrigSeries(np.array([[1]]), sin=np.array([0.3]))
    eta = OneForm(np.array([0.7]), f)
    a, b = np.array([0.1]), np.array([1.1])
    assert float(eta.line_integral(a, b)) == pytest.approx(0.7)


def test_shift_by_closed_form_keeps_the_flow():
    m = pendulum()
    eta = OneForm(np.array([2.0]), TrigSeries(np.array([[2]]), cos=np.array([0.1])))
    s = ShiftedLagrangian(m, eta)
    rng = np.random.default_rng(2)
    x, v = rng.random((30, 1)), rng.normal(0, 2, (30, 1))
    assert np.allclose(s.acceleration(x, v), m.acceleration(x, v), atol=1e-10)
    assert np.allclose(s.L(x, v), m.L(x, v) - np.sum(eta.eval(x) * v, axis=1))


def test_reversed_lagrangian():
    m = ShiftedLagrangian(pendulum(), OneForm(np.array([0.5])))
    r = ReversedLagrangian(m)
    x, v = np.array([[0.3]]), np.array([[1.2]])
    assert r.L(x, v)[0] == pytest.approx(m.L(x, -v)[0])
    assert r.L_v(x, v)[0, 0] == pytest.approx(-m.L_v(x, -v)[0, 0])


def test_model_files(tmp_path):
    data = {"family": "mechanical-pendulum", "dim": 1, "params": {"amplitude": 0.5, "harmonic": 2}}
    p = tmp_path / "m.json"
    p.write_text(json.dumps(data))
    m = load_model(p)
    assert m.L(np.array([[0.25]]), np.zeros((1, 1)))[0] == pytest.approx(0.5 * (1 - np.cos(np.pi)))
    yaml = pytest.importorskip("yaml")
    q = tmp_path / "m.yaml"
    q.write_text(yaml.safe_dump(data))
    assert load_model(q).L(np.array([[0.1]]), np.ones((1, 1)))[0] == pytest.approx(m.L(np.array([[0.1]]), np.ones((1, 1)))[0])


def test_unknown_family_is_rejected():
    with pytest.raises(ModelAuditError):
        model_from_dict({"family": "nope"})


def test_free_particle_metric():
    m = free_particle(2, [[2.0, 0.0], [0.0, 1.0]])
    assert m.L(np.zeros((1, 2)), np.array([[1.0, 1.0]]))[0] == pytest.approx(1.5)
