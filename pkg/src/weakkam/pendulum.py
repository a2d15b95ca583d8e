"""Reference values for ``L = 1/2 v^2 + a (1 - cos 2 pi m x)`` on the circle.

These are independent of the path minimizers: rotation orbits of energy
``E > 0`` have velocity ``v = sqrt(2 (E + U(x)))``, so their cohomology
class and period are one-dimensional integrals. With
``E + U = (E + 2a) (1 - k^2 cos^2 pi m x)`` and ``k^2 = 2a / (E + 2a)``
both are complete elliptic integrals; ``ellipkm1`` keeps the period
accurate near the separatrix, where it diverges like ``log(1 / E)``.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ellipe, ellipkm1


def _U(x, a, m):
    return a * (1.0 - np.cos(2 * np.pi * m * x))


def _breaks(m):
    return [j / (2 * m) for j in range(1, 2 * m)]


def c_plus(E, a=1.0, m=1):
    """Class ``int_0^1 sqrt(2 (E + U))`` of the rotation graph at energy ``E >= 0``."""
    if E < 0:
        raise ValueError("rotation graphs need E >= 0")
    s = E + 2 * a
    return float(2.0 / np.pi * np.sqrt(2 * s) * ellipe(2 * a / s))


def period(E, a=1.0, m=1):
    """Time ``int_0^1 dx / v`` to go once around at energy ``E > 0``."""
    if E <= 0:
        raise ValueError("period diverges at the separatrix")
    s = E + 2 * a
    return float(2.0 / np.pi / np.sqrt(2 * s) * ellipkm1(E / s))


def flat_edge(a=1.0, m=1):
    """End of the flat piece of alpha, ``c_plus(0)``."""
    return c_plus(0.0, a, m)


def energy_of_class(c, a=1.0, m=1):
    """``E`` with ``c_plus(E) = |c|``; 0 inside the flat."""
    c = abs(c)
    if c <= flat_edge(a, m):
        return 0.0
    hi = 1.0
    while c_plus(hi, a, m) < c:
        hi *= 2.0
    return brentq(lambda E: c_plus(E, a, m) - c, 0.0, hi, xtol=1e-14, rtol=1e-14)


def alpha(c, a=1.0, m=1):
    return energy_of_class(c, a, m)


def energy_of_rotation(h, a=1.0, m=1):
    """``E`` whose rotation graph has rotation number ``|h| = 1 / period(E)``."""
    h = abs(h)
    if h == 0:
        return 0.0
    lo, hi = 1e-300, 1.0
    while 1.0 / period(hi, a, m) < h:
        hi *= 2.0
    return brentq(lambda E: 1.0 / period(E, a, m) - h, lo, hi, xtol=1e-15, rtol=1e-14)


def beta(h, a=1.0, m=1):
    """``beta(h) = c_plus(E) |h| - E`` with ``1 / period(E) = |h|``."""
    if h == 0:
        return 0.0
    E = energy_of_rotation(h, a, m)
    return c_plus(E, a, m) * abs(h) - E


def separatrix_action(x0, x1, a=1.0, m=1):
    """``int_{x0}^{x1} sqrt(2 U)``, the zero-energy action between two points."""
    val, _ = quad(lambda x: np.sqrt(2 * _U(x, a, m)), x0, x1, epsabs=1e-13, epsrel=1e-13, limit=200,
                  points=[p for p in _breaks(m) if min(x0, x1) < p < max(x0, x1)] or None)
    return val


def barrier_at_zero_class(x, y, a=1.0, m=1):
    """Peierls barrier at ``c = 0``: the cheapest route from ``x`` through a
    minimum of ``U`` to ``y`` along zero-energy arcs."""
    mins = [j / m for j in range(-m, 2 * m + 1)]
    best = np.inf
    for z in mins:
        for shift in (-1, 0, 1):
            yy = y + shift
            val = abs(separatrix_action(min(x, z), max(x, z), a, m)) + abs(separatrix_action(min(z, yy), max(z, yy), a, m))
            best = min(best, val)
    return best


def weak_kam_zero_class(y, a=1.0, m=1):
    """Weak KAM solution at ``c = 0`` normalized by ``u(0) = 0``."""
    y = float(y) % 1.0
    return min(separatrix_action(0.0, y, a, m) if y > 0 else 0.0,
               min(abs(separatrix_action(y, z, a, m)) for z in [j / m for j in range(1, m + 1)] if z >= y))


def rotation_graph(x, E, a=1.0, m=1):
    """Upper velocity ``sqrt(2 (E + U(x)))`` on the energy level ``E``."""
    return np.sqrt(2 * (E + _U(np.asarray(x, float), a, m)))
