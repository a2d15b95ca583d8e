"""Flat torus geometry and trigonometric polynomials on it.

Coordinates are dimensionless and taken modulo 1, so the torus is
``R^d / Z^d``. Periodic data (potentials, vector fields, primitives of
exact one-forms, LP test functions) are stored as real trigonometric
polynomials::

    f(x) = const + sum_k a_k cos(2 pi k.x) + b_k sin(2 pi k.x)

with integer wave vectors ``k``.
"""
from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap(x):
    """Canonical representative of ``x`` in ``[0, 1)^d``."""
    x = np.asarray(x, dtype=float)
    r = x - np.floor(x)
    # floor can leave exactly 1.0 for tiny negative inputs
    return np.where(r >= 1.0, 0.0, r)


def minimal_image(dx):
    """Shift a displacement by integers so every component lies in [-1/2, 1/2)."""
    dx = np.asarray(dx, dtype=float)
    return dx - np.floor(dx + 0.5)


def torus_distance(x, y):
    """Euclidean distance on the torus (minimal-image convention)."""
    d = minimal_image(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
    if d.ndim == 0:
        return float(abs(d))
    return np.sqrt(np.sum(d * d, axis=-1))


def torus_grid(n, dim=1):
    """Uniform grid with ``n`` nodes per axis, shape ``(n**dim, dim)``."""
    axes = [np.arange(n) / n] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


class TrigSeries:
    """Real trigonometric polynomial on ``T^d`` with optional vector values.

    Parameters
    ----------
    waves : array_like, shape (M, d)
        Integer wave vectors.
    cos, sin : array_like, shape (M,) + out_shape
        Coefficients of ``cos(2 pi k.x)`` and ``sin(2 pi k.x)``.
    const : array_like, shape out_shape
        Constant term.
    """

    def __init__(self, waves, cos=None, sin=None, const=0.0):
        waves = np.atleast_2d(np.asarray(waves, dtype=float))
        self.waves = waves
        self.dim = waves.shape[1]
        m = waves.shape[0]
        const = np.asarray(const, dtype=float)
        self.out_shape = const.shape
        shape = (m,) + self.out_shape
        self.cos = np.zeros(shape) if cos is None else np.asarray(cos, float).reshape(shape)
        self.sin = np.zeros(shape) if sin is None else np.asarray(sin, float).reshape(shape)
        self.const = const

    @classmethod
    def zero(cls, dim, out_shape=()):
        return cls(np.zeros((0, dim)), const=np.zeros(out_shape))

    @classmethod
    def from_dict(cls, data, dim, out_shape=()):
        waves = np.asarray(data.get("waves", np.zeros((0, dim))), dtype=float).reshape(-1, dim)
        return cls(waves, data.get("cos"), data.get("sin"),
                   data.get("const", np.zeros(out_shape)))

    def to_dict(self):
        return {"waves": self.waves.astype(int).tolist(), "cos": self.cos.tolist(),
                "sin": self.sin.tolist(), "const": self.const.tolist()}

    def _coefs(self):
        # derivative coefficient tables, flattened over out_shape and built once
        if getattr(self, "_tab", None) is None:
            m = len(self.waves)
            k = TWO_PI * self.waves
            a = self.cos.reshape(m, -1)
            b = self.sin.reshape(m, -1)
            kk = k[:, :, None] * k[:, None, :]
            kkk = kk[:, :, :, None] * k[:, None, None, :]
            self._tab = {
                "a": a, "b": b,
                "ga": (a[:, :, None] * k[:, None, :]).reshape(m, -1),
                "gb": (b[:, :, None] * k[:, None, :]).reshape(m, -1),
                "ha": (a[:, :, None, None] * kk[:, None]).reshape(m, -1),
                "hb": (b[:, :, None, None] * kk[:, None]).reshape(m, -1),
                "ta": (a[:, :, None, None, None] * kkk[:, None]).reshape(m, -1),
                "tb": (b[:, :, None, None, None] * kkk[:, None]).reshape(m, -1),
            }
        return self._tab

    def _phase(self, x):
        x = np.asarray(x, dtype=float)
        th = TWO_PI * (x @ self.waves.T)
        return np.cos(th), np.sin(th)

    def _apply(self, x, ca, sb, tail):
        # ca @ cos-table + sb @ sin-table, reshaped to (...,) + out + tail
        c, s = self._phase(x)
        out = c @ ca + s @ sb
        return out.reshape(c.shape[:-1] + self.out_shape + tail)

    def value(self, x):
        t = self._coefs()
        return self._apply(x, t["a"], t["b"], ()) + self.const

    def grad(self, x):
        """Gradient, shape ``(...,) + out_shape + (d,)``."""
        t = self._coefs()
        return self._apply(x, t["gb"], -t["ga"], (self.dim,))

    def hess(self, x):
        """Hessian, shape ``(...,) + out_shape + (d, d)``."""
        t = self._coefs()
        return self._apply(x, -t["ha"], -t["hb"], (self.dim, self.dim))

    def third(self, x):
        """Third derivative tensor, shape ``(...,) + out_shape + (d, d, d)``."""
        t = self._coefs()
        return self._apply(x, -t["tb"], t["ta"], (self.dim,) * 3)

    def mean(self):
        return self.const.copy()

    def __repr__(self):
        return f"TrigSeries(dim={self.dim}, modes={len(self.waves)}, out_shape={self.out_shape})"

