"""Euler-Lagrange flow, lifted orbits and occupation measures."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BadInput, EnergyDriftExceeded, SingularHessian
from .torus import wrap

DRIFT_BOUND = 1e-6


@dataclass
class Orbit:
    """Sampled Euler-Lagrange solution on the universal cover.

    ``x`` holds lifted positions, never reduced modulo 1.
    """
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    energy: np.ndarray

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])

    @property
    def drift(self):
        return float(np.max(np.abs(self.energy - self.energy[0])))

    def to_csv(self, path):
        d = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i+1}" for i in range(d)] + [f"v_{i+1}" for i in range(d)] + ["E"])
            for row in np.column_stack([self.t, self.x, self.v, self.energy]):
                w.writerow([f"{val:.12g}" for val in row])


@dataclass
class OccupationMeasure:
    """Finitely many weighted atoms ``(x, v, w)`` in ``T^d x R^d``."""
    x: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, float))
        self.v = np.atleast_2d(np.asarray(self.v, float))
        self.w = np.asarray(self.w, float).ravel()
        if np.any(self.w < 0):
            raise BadInput("negative weights")
        s = self.w.sum()
        if abs(s - 1.0) > 1e-12:
            self.w = self.w / s

    @classmethod
    def dirac(cls, x, v):
        return cls(np.atleast_2d(x), np.atleast_2d(v), np.ones(1))

    def integrate(self, fun):
        """``sum_i w_i fun(x_i, v_i)``; ``fun`` is vectorized over atoms."""
        vals = np.asarray(fun(self.x, self.v), float)
        return np.tensordot(self.w, vals, axes=(0, 0))

    def mix(self, other, lam):
        """Convex combination ``(1 - lam) self + lam other``."""
        return OccupationMeasure(np.vstack([self.x, other.x]), np.vstack([self.v, other.v]),
                                 np.concatenate([(1 - lam) * self.w, lam * other.w]))

    def support(self, threshold=0.0):
        keep = self.w > threshold
        return self.x[keep], self.v[keep], self.w[keep]


def _rk4_step(model, x, v, dt):
    def f(xx, vv):
        return vv, model.acceleration(xx, vv)
    k1x, k1v = f(x, v)
    k2x, k2v = f(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
    k3x, k3v = f(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
    k4x, k4v = f(x + dt * k3x, v + dt * k3v)
    return (x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
            v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))


def integrate_batch(model, x0, v0, t_end, dt=1e-3, stride=1):
    """RK4 for many initial conditions at once.

    Returns ``(t, X, V)`` with ``X, V`` of shape ``(n_samples, batch, d)``.
    Every ``stride``-th step is stored.
    """
    if dt <= 0 or t_end <= 0:
        raise BadInput("dt and t_end must be positive")
    x = np.array(x0, float, ndmin=2)
    v = np.array(v0, float, ndmin=2)
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        n = int(np.ceil(t_end / dt))
        dt = t_end / n
    xs, vs = [x.copy()], [v.copy()]
    for i in range(1, n + 1):
        try:
            x, v = _rk4_step(model, x, v, dt)
        except np.linalg.LinAlgError as exc:
            raise SingularHessian(str(exc)) from exc
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise SingularHessian("non-finite state during integration")
        if i % stride == 0 or i == n:
            xs.append(x.copy())
            vs.append(v.copy())
    steps = np.arange(0, n + 1, stride)
    if steps[-1] != n:
        steps = np.append(steps, n)
    return steps * dt, np.stack(xs), np.stack(vs)


def integrate_el_flow(model, x0, v0, t_end, dt=1e-3, drift_bound=DRIFT_BOUND):
    """Integrate the Euler-Lagrange flow with classical RK4.

    Parameters
    ----------
    model : Lagrangian
    x0, v0 : array_like, shape (d,)
        Initial lifted position and velocity.
    t_end, dt : float
        Horizon and fixed step.
    drift_bound : float or None
        Relative energy drift allowed, measured as
        ``max|E - E0| / max(1, |E0|)``. ``None`` disables the check.

    Raises
    ------
    EnergyDriftExceeded, SingularHessian
    """
    x0 = np.atleast_1d(np.asarray(x0, float))
    v0 = np.atleast_1d(np.asarray(v0, float))
    t, X, V = integrate_batch(model, x0[None], v0[None], t_end, dt)
    X, V = X[:, 0], V[:, 0]
    E = model.energy(X, V)
    orbit = Orbit(t, X, V, E)
    if drift_bound is not None:
        rel = orbit.drift / max(1.0, abs(E[0]))
        if rel > drift_bound:
            raise EnergyDriftExceeded(f"relative energy drift {rel:.3e} > {drift_bound:.1e}")
    return orbit


def rotation_vector_of_orbit(orbit):
    return (orbit.x[-1] - orbit.x[0]) / orbit.duration


def occupation_measure(orbit):
    """Uniform-in-time measure along the orbit, trapezoid weights."""
    n = len(orbit.t)
    if n == 1:
        return OccupationMeasure(wrap(orbit.x), orbit.v, np.ones(1))
    w = np.empty(n)
    dt = np.diff(orbit.t)
    w[0] = dt[0] / 2
    w[-1] = dt[-1] / 2
    w[1:-1] = (dt[:-1] + dt[1:]) / 2
    if np.allclose(orbit.x, orbit.x[0]) and np.allclose(orbit.v, orbit.v[0]):
        return OccupationMeasure(wrap(orbit.x[:1]), orbit.v[:1], np.ones(1))
    return OccupationMeasure(wrap(orbit.x), orbit.v, w / w.sum())


def average_action(measure, model, form=None):
    """``sum_i w_i (L(x_i, v_i) - eta(x_i).v_i)``."""
    vals = model.L(measure.x, measure.v)
    if form is not None:
        vals = vals - np.sum(form.eval(measure.x) * measure.v, axis=-1)
    return float(measure.w @ vals)


def rotation_vector(measure):
    return measure.w @ measure.v


def closedness_defect(measure, f):
    """``|sum_i w_i grad f(x_i).v_i|`` for a periodic test function ``f``."""
    return float(abs(measure.w @ np.sum(f.grad(measure.x) * measure.v, axis=-1)))


def hamilton_residual(model, orbit):
    """Residuals of Hamilton's equations along the Legendre image of an orbit.

    Time derivatives use centered differences, so the residual is
    ``O(dt^2)`` even for an exact orbit.
    """
    p = model.L_v(orbit.x, orbit.v)
    dt = orbit.t[1] - orbit.t[0]
    xdot = (orbit.x[2:] - orbit.x[:-2]) / (2 * dt)
    pdot = (p[2:] - p[:-2]) / (2 * dt)
    xi, pi = orbit.x[1:-1], p[1:-1]
    r1 = np.max(np.abs(xdot - model.H_p(xi, pi)))
    r2 = np.max(np.abs(pdot + model.H_x(xi, pi)))
    return float(r1), float(r2)
