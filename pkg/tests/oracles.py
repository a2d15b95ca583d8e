"""Frozen reference values, computed without the package.

Pendulum ``L = v^2/2 + (1 - cos 2 pi x)``. Values come from scipy
quadrature and bisection only; nothing here imports ``weakkam``.
"""
import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

TWO_OVER_PI = 2.0 / np.pi
FOUR_OVER_PI = 4.0 / np.pi


def _speed(x, E):
    # velocity on the energy level E of the pendulum, U = 1 - cos 2 pi x
    return np.sqrt(2.0 * (E + 1.0 - np.cos(2 * np.pi * x)))


def c_plus(E):
    return quad(lambda x: _speed(x, E), 0.0, 1.0, points=[0.5], limit=200)[0]


def period(E):
    return quad(lambda x: 1.0 / _speed(x, E), 0.0, 1.0, points=[0.5], limit=200)[0]


def energy_of_class(c):
    c = abs(c)
    if c <= c_plus(0.0):
        return 0.0
    return brentq(lambda E: c_plus(E) - c, 0.0, 10.0 + c * c, xtol=1e-14)


def beta(h):
    E = brentq(lambda E: 1.0 / period(E) - abs(h), 1e-6, 50.0, xtol=1e-14)
    return c_plus(E) * abs(h) - E


def separatrix_action(a, b):
    return quad(lambda x: np.sqrt(2.0 * (1.0 - np.cos(2 * np.pi * x))), a, b)[0]


# frozen numbers (12 digits), regenerated by running this module
FROZEN = {
    "c_plus(0)": 1.27323954474,
    "energy_of_class(2)": 1.06379542286,
    "period(1)": 0.527324307416,
    "beta(1/period(1))": 2.72955555792,
    "separatrix_action(0, 1/2)": 0.636619772368,
}


def recompute():
    return {
        "c_plus(0)": c_plus(0.0),
        "energy_of_class(2)": energy_of_class(2.0),
        "period(1)": period(1.0),
        "beta(1/period(1))": beta(1.0 / period(1.0)),
        "separatrix_action(0, 1/2)": separatrix_action(0.0, 0.5),
    }


if __name__ == "__main__":
    for k, v in recompute().items():
        print(f"{k!r}: {v:.12g},")
