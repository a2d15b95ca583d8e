"""Tonelli Lagrangians on the flat torus and their Fenchel-Legendre duals.

All model methods are vectorized: positions ``x`` and velocities ``v``
are arrays of shape ``(..., d)`` and results carry the same leading
shape. Positions may be lifted (not wrapped); every built-in model is
periodic so no wrapping is needed before evaluation.

Derivative naming: ``L_x`` and ``L_v`` are gradients; ``L_vv`` is the
fiber Hessian; ``L_vx[..., i, j] = d^2 L / dv_i dx_j``; ``L_xx`` is the
base Hessian.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ModelAuditError, NoConvergence
from .torus import TrigSeries, torus_grid

FAMILIES = ("riemannian-flat", "mechanical-pendulum", "mechanical-custom",
            "mane-vectorfield", "custom")

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50


class CotangentPoint(NamedTuple):
    x: np.ndarray
    p: np.ndarray


class Lagrangian:
    """Base class; subclasses provide ``L`` and its derivatives."""

    dim: int
    family: str = "custom"

    def L(self, x, v):
        raise NotImplementedError

    def L_x(self, x, v):
        raise NotImplementedError

    def L_v(self, x, v):
        raise NotImplementedError

    def L_vv(self, x, v):
        raise NotImplementedError

    def L_vx(self, x, v):
        raise NotImplementedError

    def L_xx(self, x, v):
        raise NotImplementedError

    def __call__(self, x, v):
        return self.L(x, v)

    # Hamiltonian side --------------------------------------------------

    def velocity_of_momentum(self, x, p, v0=None):
        """Solve ``L_v(x, v) = p`` for ``v`` by damped Newton iteration."""
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        x, p = np.broadcast_arrays(x, p)
        if v0 is None:
            v = np.linalg.solve(self.L_vv(x, np.zeros_like(p)), p[..., None])[..., 0]
        else:
            v = np.array(np.broadcast_to(v0, p.shape), dtype=float)
        res = self.L_v(x, v) - p
        rnorm = _norm(res)
        for _ in range(NEWTON_MAXITER):
            if np.all(rnorm <= NEWTON_TOL * (1.0 + _norm(p))):
                return v
            step = np.linalg.solve(self.L_vv(x, v), res[..., None])[..., 0]
            t = np.ones(rnorm.shape)
            for _ in range(30):
                vt = v - t[..., None] * step
                rt = self.L_v(x, vt) - p
                nt = _norm(rt)
                bad = nt > rnorm
                if not np.any(bad):
                    break
                t = np.where(bad, 0.5 * t, t)
            v, res, rnorm = vt, rt, nt
        if np.all(rnorm <= NEWTON_TOL * (1.0 + _norm(p))):
            return v
        raise NoConvergence(f"inverse Legendre Newton residual {np.max(rnorm):.3e}")

    def H(self, x, p):
        """Fenchel transform ``sup_v <p,v> - L(x,v)``."""
        v = self.velocity_of_momentum(x, p)
        return np.sum(np.asarray(p) * v, axis=-1) - self.L(x, v)

    def H_p(self, x, p):
        return self.velocity_of_momentum(x, p)

    def H_x(self, x, p):
        v = self.velocity_of_momentum(x, p)
        return -self.L_x(x, v)

    def energy(self, x, v):
        return np.sum(self.L_v(x, v) * v, axis=-1) - self.L(x, v)

    def acceleration(self, x, v):
        """Euler-Lagrange acceleration ``L_vv^{-1} (L_x - L_vx v)``."""
        rhs = self.L_x(x, v) - np.einsum("...ij,...j->...i", self.L_vx(x, v), v)
        return np.linalg.solve(self.L_vv(x, v), rhs[..., None])[..., 0]


def _norm(a):
    return np.sqrt(np.sum(np.asarray(a) ** 2, axis=-1))


class QuadraticLagrangian(Lagrangian):
    """``L = 1/2 (v - X(x))^T G (v - X(x)) + U(x)``.

    Covers the flat Riemannian, mechanical and magnetic-type (Mañé)
    families with closed-form derivatives.
    """

    def __init__(self, dim, metric=None, potential=None, field=None,
                 family="mechanical-custom", params=None):
        self.dim = int(dim)
        self.G = np.eye(self.dim) if metric is None else np.asarray(metric, float).reshape(self.dim, self.dim)
        self._Ginv = np.linalg.inv(self.G)
        self.U = potential
        self.X = field
        self.family = family
        self.params = dict(params or {})

    def _w(self, x, v):
        dv = v if self.X is None else v - self.X.value(x)
        return dv, dv @ self.G.T

    def L(self, x, v):
        x = np.asarray(x, float)
        dv, w = self._w(x, np.asarray(v, float))
        out = 0.5 * np.sum(dv * w, axis=-1)
        if self.U is not None:
            out = out + self.U.value(x)
        return out

    def L_v(self, x, v):
        return self._w(np.asarray(x, float), np.asarray(v, float))[1]

    def L_x(self, x, v):
        x = np.asarray(x, float)
        _, w = self._w(x, np.asarray(v, float))
        out = np.zeros(np.broadcast_shapes(x.shape, np.shape(v)))
        if self.X is not None:
            out = out - np.einsum("...i,...ij->...j", w, self.X.grad(x))
        if self.U is not None:
            out = out + self.U.grad(x)
        return out

    def L_vv(self, x, v):
        shape = np.broadcast_shapes(np.shape(x), np.shape(v))[:-1]
        return np.broadcast_to(self.G, shape + (self.dim, self.dim))

    def L_vx(self, x, v):
        x = np.asarray(x, float)
        shape = np.broadcast_shapes(x.shape, np.shape(v))[:-1]
        if self.X is None:
            return np.zeros(shape + (self.dim, self.dim))
        return -np.einsum("ik,...kj->...ij", self.G, np.broadcast_to(self.X.grad(x), shape + (self.dim, self.dim)))

    def L_xx(self, x, v):
        x = np.asarray(x, float)
        shape = np.broadcast_shapes(x.shape, np.shape(v))[:-1]
        out = np.zeros(shape + (self.dim, self.dim))
        if self.X is not None:
            _, w = self._w(x, np.asarray(v, float))
            dX = self.X.grad(x)
            out = out + np.einsum("...ij,ik,...kl->...jl", dX, self.G, dX)
            out = out - np.einsum("...i,...ijl->...jl", w, self.X.hess(x))
        if self.U is not None:
            out = out + self.U.hess(x)
        return out

    def acceleration(self, x, v):
        if self.X is not None:
            return super().acceleration(x, v)
        if self.U is None:
            return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(v)))
        return self.U.grad(x) @ self._Ginv.T

    def to_dict(self):
        return {"family": self.family, "dim": self.dim, "params": self.params}

    def __repr__(self):
        return f"QuadraticLagrangian(family={self.family!r}, dim={self.dim}, params={self.params})"


class CustomLagrangian(Lagrangian):
    """User-supplied Lagrangian with explicit derivatives.

    Missing second derivatives ``L_vx``/``L_xx`` are filled in by central
    differences of the supplied gradients. Construction runs
    :func:`audit_model`, which rejects inconsistent derivatives.
    """

    def __init__(self, dim, L, L_x, L_v, L_vv, L_vx=None, L_xx=None, audit=True, name="custom"):
        self.dim = int(dim)
        self.family = "custom"
        self.name = name
        self._L, self._Lx, self._Lv, self._Lvv = L, L_x, L_v, L_vv
        self._Lvx, self._Lxx = L_vx, L_xx
        if audit:
            audit_model(self)

    def L(self, x, v):
        return np.asarray(self._L(np.asarray(x, float), np.asarray(v, float)), float)

    def L_x(self, x, v):
        return np.asarray(self._Lx(np.asarray(x, float), np.asarray(v, float)), float)

    def L_v(self, x, v):
        return np.asarray(self._Lv(np.asarray(x, float), np.asarray(v, float)), float)

    def L_vv(self, x, v):
        return np.asarray(self._Lvv(np.asarray(x, float), np.asarray(v, float)), float)

    def L_vx(self, x, v):
        if self._Lvx is not None:
            return np.asarray(self._Lvx(np.asarray(x, float), np.asarray(v, float)), float)
        return _fd_jacobian(lambda y: self.L_v(y, v), np.asarray(x, float))

    def L_xx(self, x, v):
        if self._Lxx is not None:
            return np.asarray(self._Lxx(np.asarray(x, float), np.asarray(v, float)), float)
        return _fd_jacobian(lambda y: self.L_x(y, v), np.asarray(x, float))


def _fd_jacobian(fun, x, h=1e-6):
    cols = []
    for j in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[j] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


class OneForm:
    """Closed one-form ``eta = c + grad f`` on the torus.

    ``c`` is the cohomology class; the exact part is stored through the
    periodic primitive ``f`` (a :class:`TrigSeries`), so it has zero mean
    and zero loop integrals by construction.
    """

    def __init__(self, cohomology, primitive=None):
        self.c = np.atleast_1d(np.asarray(cohomology, dtype=float))
        self.dim = self.c.shape[0]
        self.f = primitive
        if primitive is not None and primitive.dim != self.dim:
            raise ValueError("primitive dimension does not match cohomology vector")

    @classmethod
    def closed(cls, c):
        return cls(c)

    def eval(self, x):
        x = np.asarray(x, float)
        out = np.broadcast_to(self.c, x.shape).copy()
        if self.f is not None:
            out = out + self.f.grad(x)
        return out

    __call__ = eval

    def primitive(self, x):
        x = np.asarray(x, float)
        if self.f is None:
            return np.zeros(x.shape[:-1])
        return self.f.value(x)

    def hess(self, x):
        x = np.asarray(x, float)
        if self.f is None:
            return np.zeros(x.shape + (self.dim,))
        return self.f.hess(x)

    def third(self, x):
        x = np.asarray(x, float)
        if self.f is None:
            return np.zeros(x.shape + (self.dim, self.dim))
        return self.f.third(x)

    def line_integral(self, x0, x1):
        """Integral along any path from lifted ``x0`` to lifted ``x1``."""
        x0 = np.asarray(x0, float)
        x1 = np.asarray(x1, float)
        return np.sum(self.c * (x1 - x0), axis=-1) + self.primitive(x1) - self.primitive(x0)

    @property
    def is_exact(self):
        return bool(np.all(self.c == 0))

    def __add__(self, other):
        if self.f is None:
            f = other.f
        elif other.f is None:
            f = self.f
        else:
            f = TrigSeries(np.vstack([self.f.waves, other.f.waves]),
                           np.concatenate([self.f.cos, other.f.cos]),
                           np.concatenate([self.f.sin, other.f.sin]),
                           self.f.const + other.f.const)
        return OneForm(self.c + other.c, f)

    def __neg__(self):
        f = None
        if self.f is not None:
            f = TrigSeries(self.f.waves, -self.f.cos, -self.f.sin, -self.f.const)
        return OneForm(-self.c, f)

    def __repr__(self):
        return f"OneForm(c={self.c.tolist()}, exact={'none' if self.f is None else len(self.f.waves)})"


class ShiftedLagrangian(Lagrangian):
    """``L_eta(x, v) = L(x, v) - eta(x).v``; same Euler-Lagrange flow as ``L``."""

    def __init__(self, base, form):
        if base.dim != form.dim:
            raise ValueError("form and model dimensions differ")
        self.base = base
        self.form = form
        self.dim = base.dim
        self.family = base.family

    def L(self, x, v):
        return self.base.L(x, v) - np.sum(self.form.eval(x) * v, axis=-1)

    def L_v(self, x, v):
        return self.base.L_v(x, v) - self.form.eval(x)

    def L_x(self, x, v):
        return self.base.L_x(x, v) - np.einsum("...ij,...i->...j", self.form.hess(x), np.asarray(v, float))

    def L_vv(self, x, v):
        return self.base.L_vv(x, v)

    def L_vx(self, x, v):
        return self.base.L_vx(x, v) - self.form.hess(x)

    def L_xx(self, x, v):
        return self.base.L_xx(x, v) - np.einsum("...ijl,...i->...jl", self.form.third(x), np.asarray(v, float))


class ReversedLagrangian(Lagrangian):
    """``L(x, -v)``: its Euler-Lagrange flow is the time reversal of the flow of ``L``.

    Backward orbits of ``L`` are forward orbits of this model with the
    velocity negated; weak KAM solutions of positive type for ``L`` are
    negative-type solutions for this model.
    """

    def __init__(self, base):
        self.base = base
        self.dim = base.dim
        self.family = base.family

    def L(self, x, v):
        return self.base.L(x, -np.asarray(v, float))

    def L_v(self, x, v):
        return -self.base.L_v(x, -np.asarray(v, float))

    def L_x(self, x, v):
        return self.base.L_x(x, -np.asarray(v, float))

    def L_vv(self, x, v):
        return self.base.L_vv(x, -np.asarray(v, float))

    def L_vx(self, x, v):
        return -self.base.L_vx(x, -np.asarray(v, float))

    def L_xx(self, x, v):
        return self.base.L_xx(x, -np.asarray(v, float))


# Operations ------------------------------------------------------------


def fenchel_hamiltonian(model, x, p):
    """``H(x, p) = sup_v <p, v> - L(x, v)`` computed by Newton on the fiber."""
    return model.H(np.asarray(x, float), np.asarray(p, float))


def legendre_transform(model, x, v):
    """Fiber derivative ``(x, v) -> (x, dL/dv)``."""
    x = np.asarray(x, float)
    return CotangentPoint(x, model.L_v(x, np.asarray(v, float)))


def inverse_legendre(model, x, p):
    """Inverse of :func:`legendre_transform`; returns ``(x, v)``."""
    x = np.asarray(x, float)
    return x, model.velocity_of_momentum(x, np.asarray(p, float))


def energy(model, x, v):
    """``E = <dL/dv, v> - L``."""
    return model.energy(np.asarray(x, float), np.asarray(v, float))


def shift_by_one_form(model, form):
    """Return ``L_eta = L - eta.v``."""
    return ShiftedLagrangian(model, form)


# Built-in families and loading ---------------------------------------------


def free_particle(dim=1, metric=None):
    """Flat Riemannian Lagrangian ``1/2 v^T G v``."""
    params = {} if metric is None else {"metric": np.asarray(metric).tolist()}
    return QuadraticLagrangian(dim, metric=metric, family="riemannian-flat", params=params)


def pendulum(dim=1, amplitude=1.0, harmonic=1):
    """``1/2|v|^2 + a sum_i (1 - cos(2 pi m x_i))``.

    ``harmonic=2`` gives the doubled pendulum (lift to the double cover).
    """
    waves = harmonic * np.eye(dim)
    U = TrigSeries(waves, cos=-amplitude * np.ones(dim), const=amplitude * dim)
    return QuadraticLagrangian(dim, potential=U, family="mechanical-pendulum",
                               params={"amplitude": amplitude, "harmonic": harmonic})


def doubled_pendulum():
    return pendulum(1, 1.0, 2)


def mechanical(dim, potential, metric=None):
    return QuadraticLagrangian(dim, metric=metric, potential=potential, family="mechanical-custom",
                               params={"potential": potential.to_dict()})


def mane_lagrangian(dim, field):
    """``1/2 |v - X(x)|^2`` for a periodic vector field ``X``."""
    return QuadraticLagrangian(dim, field=field, family="mane-vectorfield",
                               params={"field": field.to_dict()})


def model_from_dict(data, audit=True):
    family = data.get("family")
    dim = int(data.get("dim", 1))
    params = data.get("params", {}) or {}
    if family == "riemannian-flat":
        model = free_particle(dim, params.get("metric"))
    elif family == "mechanical-pendulum":
        model = pendulum(dim, float(params.get("amplitude", 1.0)), int(params.get("harmonic", 1)))
    elif family == "mechanical-custom":
        U = TrigSeries.from_dict(params["potential"], dim)
        model = mechanical(dim, U, params.get("metric"))
    elif family == "mane-vectorfield":
        X = TrigSeries.from_dict(params["field"], dim, out_shape=(dim,))
        model = mane_lagrangian(dim, X)
    elif family == "custom":
        target = params.get("factory")
        if not target:
            raise ModelAuditError("custom family needs params.factory = 'module:function'")
        import importlib
        mod, _, attr = target.partition(":")
        model = getattr(importlib.import_module(mod), attr)(**params.get("kwargs", {}))
    else:
        raise ModelAuditError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if audit:
        audit_model(model)
    return model


def load_model(path, audit=True):
    """Load a model definition file (JSON, or YAML by extension)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return model_from_dict(data, audit=audit)


BUILTIN_MODELS = ("pendulum", "doubled-pendulum", "free1d", "free2d")


def builtin_model_path(name):
    return Path(__file__).parent / "data" / "models" / f"{name}.json"


def builtin_model(name):
    return load_model(builtin_model_path(name))


# Audits ----------------------------------------------------------------------


def audit_model(model, n_x=8, v_max=10.0, n_v=9, fd_tol=1e-5, superlinear=(1.0, 2.0, 5.0)):
    """Sampled Tonelli audit.

    Checks positive-definite fiber Hessian, agreement of the analytic
    derivatives with finite differences, and records superlinearity
    witnesses ``B(A) = max (A|v| - L)`` over the sampled ball. The
    superlinearity part is a finite witness only, never a proof.

    Returns a dict of diagnostics; raises :class:`ModelAuditError`.
    """
    d = model.dim
    xs = torus_grid(n_x, d) + 0.37 / n_x
    vs = torus_grid(n_v, d) * 2 * v_max - v_max + v_max / n_v
    X = np.repeat(xs, len(vs), axis=0)
    V = np.tile(vs, (len(xs), 1))
    eig = np.linalg.eigvalsh(np.asarray(model.L_vv(X, V)))
    if not np.all(eig > 0):
        raise ModelAuditError(f"fiber Hessian not positive definite (min eig {eig.min():.3e})")
    h = 1e-6
    worst = 0.0
    L0 = model.L(X, V)
    scale = 1.0 + np.abs(L0)
    for name, grad, arg in (("L_x", model.L_x(X, V), 0), ("L_v", model.L_v(X, V), 1)):
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            if arg == 0:
                fd = (model.L(X + e, V) - model.L(X - e, V)) / (2 * h)
            else:
                fd = (model.L(X, V + e) - model.L(X, V - e)) / (2 * h)
            err = np.max(np.abs(fd - grad[:, j]) / scale)
            worst = max(worst, err)
            if err > fd_tol:
                raise ModelAuditError(f"{name}[{j}] disagrees with finite differences ({err:.2e})")
    speed = np.linalg.norm(V, axis=-1)
    witnesses = {float(a): float(np.max(a * speed - L0)) for a in superlinear}
    return {"min_fiber_eig": float(eig.min()), "fd_error": float(worst), "superlinear_B": witnesses,
            "v_max": v_max}
