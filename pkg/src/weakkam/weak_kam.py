"""Weak KAM solutions by discrete Lax-Oleinik iteration on a periodic grid.

The operator ``(T u)(y) = min_x u(x) + K(x, y)`` uses the cached action
kernel over time ``tau`` (:func:`weakkam.kernel.action_kernel`). Iterating
``u <- T u - (T u)(anchor)`` converges to a weak KAM solution of negative
type; the per-sweep shift is ``-alpha(c) tau``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Orbit
from .errors import BadInput, DegenerateArgmin, NoConvergence, NotConverged
from .kernel import SUBSTEPS, action_kernel, interp_periodic
from .lagrangian import OneForm
from .paths import Problem, initial_open, node_count, solve

GRID = 256
TAU = 1.0
TOL = 1e-3
MAX_SWEEPS = 2000
KINK_FACTOR = 10.0


@dataclass
class GridField:
    """Periodic function sampled at ``i / n``."""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.ndim != 1 or not np.all(np.isfinite(self.values)):
            raise BadInput("grid fields hold finite values on a one-dimensional grid")

    @property
    def n(self):
        return len(self.values)

    @property
    def x(self):
        return np.arange(self.n) / self.n

    def __call__(self, x):
        return interp_periodic(self.values, x)

    def __add__(self, a):
        return GridField(self.values + a)

    def __sub__(self, other):
        if isinstance(other, GridField):
            return GridField(self.values - other.values)
        return GridField(self.values - other)

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def lipschitz(self):
        return float(np.max(np.abs(np.diff(np.append(self.values, self.values[0])))) * self.n)

    @classmethod
    def zeros(cls, n=GRID):
        return cls(np.zeros(n))

    @classmethod
    def from_function(cls, f, n=GRID):
        return cls(f(np.arange(n) / n))


@dataclass
class WeakKamSolution:
    u: GridField
    alpha_estimate: float
    residual: float
    sweeps: int
    tau: float
    c: np.ndarray
    history: list = field(default_factory=list)
    type: str = "negative"

    def to_csv(self, path, model=None, form=None, digits=12):
        """Columns ``x, u, residual, kink``; residuals need ``model``."""
        if model is not None:
            _, res, kink = subsolution_residual(model, form, self.u, self.alpha_estimate)
        else:
            res, kink = np.full(self.u.n, np.nan), np.zeros(self.u.n, bool)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "u", "residual", "kink"])
            for x, u, r, k in zip(self.u.x, self.u.values, res, kink):
                w.writerow([f"{x:.{digits}g}", f"{u:.{digits}g}", f"{r:.{digits}g}", int(k)])


def _form(form):
    return OneForm(np.zeros(1)) if form is None else form


def kernel_for(model, form, n=GRID, tau=TAU):
    return action_kernel(model, _form(form), n=n, tau=tau)


def apply_kernel(K, u):
    """``(T u)(y) = min_x u(x) + K[x, y]`` for a kernel table ``K``."""
    return np.min(np.asarray(u, float)[:, None] + K, axis=0)


def lax_oleinik_step(model, form, u, tau=TAU, kernel=None):
    """One application of the Lax-Oleinik operator over time ``tau``.

    Monotone and commuting with constants by construction (a pointwise
    minimum of translates).
    """
    if not tau > 0:
        raise BadInput("tau must be positive")
    ker = kernel_for(model, form, u.n, tau) if kernel is None else kernel
    return GridField(apply_kernel(ker.K, u.values))


def solve_weak_kam(model, form=None, n=GRID, tau=TAU, tol=TOL, max_sweeps=MAX_SWEEPS, anchor=0,
                   u0=None):
    """Normalized Lax-Oleinik iteration to a weak KAM solution.

    Each sweep applies the operator and subtracts the value at ``anchor``.
    The shift of that sweep gives ``alpha_estimate = -shift / tau`` and the
    residual is ``max |T u - u + alpha tau|``.

    Raises
    ------
    NotConverged
        ``max_sweeps`` reached; ``history`` holds the residual per sweep.
    """
    form = _form(form)
    ker = kernel_for(model, form, n, tau)
    u = np.zeros(n) if u0 is None else np.asarray(u0.values, float).copy()
    u -= u[anchor]
    hist = []
    for sweep in range(1, max_sweeps + 1):
        w = apply_kernel(ker.K, u)
        shift = w[anchor]
        res = float(np.max(np.abs(w - shift - u)))
        hist.append(res)
        u = w - shift
        if res <= tol:
            return WeakKamSolution(GridField(u), -shift / tau + 0.0, res, sweep, tau, np.array(form.c, float), hist)
    raise NotConverged(f"no fixed point after {max_sweeps} sweeps (residual {hist[-1]:.3e})", hist)


def level_drift(model, form=None, k=0.0, sweeps=50, n=GRID, tau=TAU):
    """Growth rate of the unnormalized iteration ``u <- T u + k tau``.

    Returns ``(u_sweeps(anchor) - u_0(anchor)) / (sweeps tau)``, which tends
    to ``k - alpha(c)``: only ``k = alpha(c)`` admits a bounded orbit.
    """
    ker = kernel_for(model, form, n, tau)
    u = np.zeros(n)
    for _ in range(sweeps):
        u = apply_kernel(ker.K, u) + k * tau
    return float(np.mean(u)) / (sweeps * tau)


def subsolution_residual(model, form, u, alpha_c, kink_factor=KINK_FACTOR):
    """``H(x, eta(x) + u'(x)) - alpha_c`` at every grid node.

    Gradients are centred differences. Nodes where the one-sided
    differences disagree by more than ``kink_factor`` times their median
    disagreement are kinks: they are flagged and left out of the maximum.

    Returns
    -------
    max_residual : float
    field : ndarray
    kink : ndarray of bool
    """
    form = _form(form)
    v = u.values
    h = 1.0 / u.n
    fwd = (np.roll(v, -1) - v) / h
    bwd = (v - np.roll(v, 1)) / h
    jump = np.abs(fwd - bwd)
    floor = 1e-8 * (1.0 + float(np.max(np.abs(fwd))))
    kink = jump > kink_factor * max(float(np.median(jump)), floor)
    x = u.x[:, None]
    p = form.eval(x) + 0.5 * (fwd + bwd)[:, None]
    res = model.H(x, p) - alpha_c
    ok = ~kink
    return (float(np.max(res[ok])) if ok.any() else float("nan")), res, kink


# calibrated curves -------------------------------------------------------------------


@dataclass
class CalibratedOrbit:
    orbit: Orbit
    nodes: list
    defects: list
    ties: list

    @property
    def max_defect_rate(self):
        return max(self.defects) if self.defects else 0.0


def _pick(vals, tie_tol, where):
    m = float(np.min(vals))
    idx = np.nonzero(vals <= m + tie_tol * (1.0 + abs(m)))[0]
    if len(idx) > 1:
        warnings.warn(DegenerateArgmin(f"{len(idx)} minimizers at {where}: {idx.tolist()}"), stacklevel=3)
    return int(idx[0]), idx.tolist()


def extract_calibrated_orbit(model, form, solution, x0, steps=8, tie_tol=1e-9, dt_max=0.01):
    """Backward minimizing characteristic of ``solution`` ending at ``x0``.

    Predecessors are chosen as ``argmin_x u(x) + K(x, y)`` over ``steps``
    periods ``tau``; each period is split at kernel midpoints down to the
    base step and those short hops are solved as fixed-time paths. Ties
    beyond ``tie_tol`` emit :class:`DegenerateArgmin` and the smallest
    index is used.

    Returns
    -------
    CalibratedOrbit
        ``defects`` holds ``|u(y) - u(x) - (action + alpha tau)| / tau`` per period.
    """
    form = _form(form)
    u = solution.u.values
    n, tau = len(u), solution.tau
    kers = [action_kernel(model, form, n, tau / 2 ** s, SUBSTEPS - s) for s in range(SUBSTEPS + 1)]
    j = int(np.round((float(np.atleast_1d(x0)[0]) % 1.0) * n)) % n
    chain, ties = [j], []
    for _ in range(steps):
        i, tie = _pick(u + kers[0].K[:, chain[-1]], tie_tol, f"node {chain[-1]}")
        if len(tie) > 1:
            ties.append(tie)
        chain.append(i)
    chain = chain[::-1]

    def split(i, j, s):
        if s == SUBSTEPS:
            return [(i, j)]
        m, _ = _pick(kers[s + 1].K[i, :] + kers[s + 1].K[:, j], tie_tol, f"split {i}->{j}")
        return split(i, m, s + 1) + split(m, j, s + 1)

    hops = []
    for i, j in zip(chain[:-1], chain[1:]):
        hops.extend(split(i, j, 0))
    base = kers[-1]
    tb = base.tau
    nn = node_count(tb, dt_max)
    start = chain[0] / n
    lifts = [start]
    for i, j in hops:
        lifts.append(lifts[-1] + base.shift[i, j])
    probs = [Problem(initial_open([a], [b], tb, nn), tb) for a, b in zip(lifts[:-1], lifts[1:])]
    sols = solve(model, probs)
    if not all(s.converged for s in sols):
        raise NoConvergence("a calibrated segment did not converge")
    X = np.concatenate([sols[0].nodes] + [s.nodes[1:] for s in sols[1:]])
    dt = tb / nn
    t = -steps * tau + dt * np.arange(len(X))
    V = np.gradient(X, dt, axis=0)
    orbit = Orbit(t, X, V, model.energy(X, V))
    per = 2 ** SUBSTEPS
    defects = []
    for k, (i, j) in enumerate(zip(chain[:-1], chain[1:])):
        seg = sols[k * per:(k + 1) * per]
        a = sum(s.action for s in seg) - float(form.line_integral(np.array([lifts[k * per]]),
                                                                  np.array([lifts[(k + 1) * per]])))
        defects.append(abs(u[j] - u[i] - (a + solution.alpha_estimate * tau)) / tau)
    return CalibratedOrbit(orbit, chain, defects, ties)


# domination and representation -------------------------------------------------------


def domination_defects(model, form, solution, n_paths=100, seed=0, n_nodes=16):
    """``u(gamma(b)) - u(gamma(a)) - (action + alpha (b - a))`` on random polygons.

    A dominated ``u`` gives values at most the grid error.
    """
    from .action import path_action

    form = _form(form)
    rng = np.random.default_rng(seed)
    out = np.empty(n_paths)
    for k in range(n_paths):
        T = rng.uniform(0.25, 4.0)
        steps = rng.normal(0.0, 0.6, n_nodes) * T / n_nodes
        nodes = rng.random() + np.concatenate([[0.0], np.cumsum(steps)])
        nodes = nodes[:, None]
        a = path_action(model, form, nodes, T)
        du = solution.u(nodes[-1, 0]) - solution.u(nodes[0, 0])
        out[k] = float(du) - (a + solution.alpha_estimate * T)
    return out


def critical_subsolutions(phi, nodes=None):
    """The subsolutions ``u_z = Phi(z, .)`` of a critical potential table."""
    phi = np.asarray(phi, float)
    nodes = range(len(phi)) if nodes is None else nodes
    return [GridField(phi[z]) for z in nodes]


def barrier_from_subsolutions(us, i, j):
    """``max_u u(x_j) - u(x_i)`` over a family of grid subsolutions."""
    return max(float(u.values[j] - u.values[i]) for u in us)


def positive_type(model):
    """Model whose negative-type solutions are the positive-type solutions of ``model``."""
    from .lagrangian import ReversedLagrangian

    return ReversedLagrangian(model)
