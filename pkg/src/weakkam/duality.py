"""Mather's alpha function by three routes, beta by conjugation, flats.

Routes for ``alpha(c)``:

``critical-value``
    Mañé critical value of ``L - c.dx`` from the loop family.
``closed-measure-lp``
    ``-min sum mu_ij L_eta(x_i, v_j)`` over probability weights on an
    ``(x, v)`` grid that annihilate ``df.v`` for Fourier test functions
    ``f`` up to order ``K``.
``inf-max-subsolution``
    ``inf_u max_x H(x, c + du)`` over trigonometric ``u``, by L-BFGS on an
    annealed soft-max.
"""
from __future__ import annotations

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .action import mane_critical_value
from .dynamics import OccupationMeasure, average_action
from .errors import BadInput, LPInfeasible, NoConvergence, SupOnBoundary
from .lagrangian import OneForm
from .lp import simplex
from .torus import TWO_PI, torus_grid

ROUTES = ("critical-value", "closed-measure-lp", "inf-max-subsolution")
CROSS_TOL = 5e-3
FLAT_TOL = 1e-4


@dataclass
class AlphaSample:
    c: np.ndarray
    value: float
    route: str
    diagnostics: dict = field(default_factory=dict)


@dataclass
class BetaSample:
    h: np.ndarray
    value: float
    support_c: np.ndarray


@dataclass
class LPGrid:
    """Discretization of the closed-measure program.

    Defaults: 64 x-points by 65 velocities on ``[-4, 4]`` with test
    functions to order 8 in one dimension; 16 x 16 by 17 x 17 on
    ``[-2.5, 2.5]^2`` to order 3 in two.
    """
    nx: int = 64
    nv: int = 65
    vmax: float = 4.0
    K: int = 8

    @classmethod
    def default(cls, dim):
        return cls() if dim == 1 else cls(16, 17, 2.5, 3)


def _c(c, dim):
    c = np.atleast_1d(np.asarray(c, float))
    if c.shape != (dim,):
        raise BadInput(f"cohomology class must have {dim} components")
    if not np.all(np.isfinite(c)):
        raise BadInput("cohomology class must be finite")
    return c


def _test_waves(dim, K, nx):
    """Half-space representatives of integer waves with ``0 < |k|_inf <= K``."""
    out = []
    for k in itertools.product(range(-K, K + 1), repeat=dim):
        k = np.array(k)
        if not np.any(k):
            continue
        nz = k[np.nonzero(k)[0][0]]
        if nz > 0:
            out.append(k)
    return np.array(out, float)


def closed_measure_program(model, form, grid):
    """Assemble ``(cost, A_eq, b_eq, X, V)`` for the closed-measure LP."""
    d = model.dim
    xs = torus_grid(grid.nx, d)
    v1 = np.linspace(-grid.vmax, grid.vmax, grid.nv)
    vs = np.stack(np.meshgrid(*[v1] * d, indexing="ij"), axis=-1).reshape(-1, d)
    X = np.repeat(xs, len(vs), axis=0)
    V = np.tile(vs, (len(xs), 1))
    cost = model.L(X, V)
    if form is not None:
        cost = cost - np.sum(form.eval(X) * V, axis=-1)
    rows = [np.ones(len(X))]
    waves = _test_waves(d, min(grid.K, grid.nx // 2), grid.nx)
    for k in waves:
        ph = TWO_PI * (X @ k)
        kv = V @ k
        rows.append(np.cos(ph) * kv)
        s = np.sin(ph) * kv
        if np.max(np.abs(s)) > 1e-12:
            rows.append(s)
    A = np.array(rows)
    b = np.zeros(len(rows))
    b[0] = 1.0
    return cost, A, b, X, V


def _merge_by_position(X, V, w, nx, d):
    """Replace atoms sharing a base point by their velocity barycentre.

    Closedness constraints only see the flux at each base point and ``L``
    is convex in ``v``, so the merged measure is feasible and cheaper.
    """
    keep = w > 0
    X, V, w = X[keep], V[keep], w[keep]
    idx = np.round(X * nx).astype(int) % nx
    key = np.ravel_multi_index(idx.T, (nx,) * d)
    uniq, inv = np.unique(key, return_inverse=True)
    mass = np.bincount(inv, weights=w)
    vbar = np.stack([np.bincount(inv, weights=w * V[:, j]) for j in range(d)], axis=1) / mass[:, None]
    xm = np.stack(np.unravel_index(uniq, (nx,) * d), axis=1) / nx
    return xm, vbar, mass


@dataclass
class LPMeasure:
    measure: OccupationMeasure
    raw: OccupationMeasure
    lp_value: float
    value: float
    iterations: int
    box_active: bool


def mather_measure_lp(model, form=None, grid=None, solver="simplex"):
    """Minimizing closed measure of the discretized program.

    Returns an :class:`LPMeasure` whose ``measure`` has one atom per
    supported base point (velocity barycentre) and whose ``raw`` holds
    the grid atoms chosen by the solver.

    Raises
    ------
    LPInfeasible
    """
    d = model.dim
    grid = LPGrid.default(d) if grid is None else grid
    form = OneForm(np.zeros(d)) if form is None else form
    cost, A, b, X, V = closed_measure_program(model, form, grid)
    if solver == "simplex":
        at_rest = np.nonzero(np.all(np.abs(V) < 1e-12, axis=1))[0]
        if len(at_rest) == 0:
            raise LPInfeasible("velocity grid must contain v = 0")
        start = [at_rest[np.argmin(cost[at_rest])]]
        res = simplex(cost, A, b, start=start)
        w, val, its = res.x, res.value, res.iterations
    elif solver == "highs":
        from scipy.optimize import linprog
        r = linprog(cost, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        if r.status == 2:
            raise LPInfeasible(r.message)
        if r.status != 0:
            raise NoConvergence(r.message)
        w, val, its = r.x, r.fun, r.nit
    else:
        raise BadInput(f"unknown LP solver {solver!r}")
    w = np.maximum(w, 0.0)
    raw = OccupationMeasure(X[w > 1e-12], V[w > 1e-12], w[w > 1e-12])
    xm, vm, mm = _merge_by_position(raw.x, raw.v, raw.w, grid.nx, d)
    merged = OccupationMeasure(xm, vm, mm)
    box = bool(np.any(np.abs(raw.v) >= grid.vmax - 1e-12))
    value = average_action(merged, model, form)
    return LPMeasure(merged, raw, float(val), float(value), int(its), box)


# inf-max route -------------------------------------------------------------------


def _fourier_basis(dim, order):
    waves = _test_waves(dim, order, 4 * order + 2)
    return waves


def alpha_inf_max(model, c, order=None, n_x=None, betas=(10, 30, 100, 300, 1e3, 3e3, 1e4, 3e4, 1e5),
                  n_check=None):
    """``inf_u max_x H(x, c + du)`` with ``u`` a trigonometric polynomial.

    Returns ``(value, diagnostics)``; the value is the plain maximum of
    ``H`` over a fine check grid at the final ``u``, so it is an upper
    bound for the discrete inf-max up to the grid resolution.
    """
    d = model.dim
    c = _c(c, d)
    order = (16 if d == 1 else 4) if order is None else order
    n_x = (256 if d == 1 else 32) if n_x is None else n_x
    n_check = (4096 if d == 1 else 96) if n_check is None else n_check
    waves = _fourier_basis(d, order)
    X = torus_grid(n_x, d)
    k2 = TWO_PI * waves

    def grad_u(theta, pts):
        a, b = theta[:len(waves)], theta[len(waves):]
        ph = TWO_PI * (pts @ waves.T)
        return (-np.sin(ph) * a + np.cos(ph) * b) @ k2, ph

    def H_and_v(p, pts):
        v = model.velocity_of_momentum(pts, p)
        H = np.sum(p * v, axis=-1) - model.L(pts, v)
        return H, v

    def objective(theta, beta):
        du, ph = grad_u(theta, X)
        p = c + du
        H, v = H_and_v(p, X)
        s = logsumexp(beta * H)
        f = s / beta
        wts = np.exp(beta * H - s)
        # d f / d theta = sum_i w_i v_i . d(du_i)/d theta
        vk = v @ k2.T
        ga = np.sum(wts[:, None] * (-np.sin(ph)) * vk, axis=0)
        gb = np.sum(wts[:, None] * np.cos(ph) * vk, axis=0)
        return f, np.concatenate([ga, gb])

    theta = np.zeros(2 * len(waves))
    hist = []
    for beta in betas:
        res = minimize(objective, theta, args=(beta,), jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15})
        theta = res.x
        hist.append((float(beta), float(res.fun)))
    Xc = torus_grid(n_check, d)
    du, _ = grad_u(theta, Xc)
    H, _ = H_and_v(c + du, Xc)
    return float(np.max(H)), {"softmax_history": hist, "coefficients": theta, "waves": waves}


# alpha ---------------------------------------------------------------------------


def alpha(model, c, route="critical-value", grid=None, **opts):
    """Mather's alpha at ``c`` by the requested route.

    Raises
    ------
    LPInfeasible, NoConvergence, BadInput
    """
    d = model.dim
    c = _c(c, d)
    if route == "critical-value":
        cv = mane_critical_value(model, OneForm(c), details=True, **opts)
        return AlphaSample(c, cv.value, route, {"bracket": cv.bracket, "rotation": cv.rotation,
                                                "winding": cv.winding, "period": cv.T})
    if route == "closed-measure-lp":
        res = mather_measure_lp(model, OneForm(c), grid, **opts)
        from .dynamics import rotation_vector
        return AlphaSample(c, -res.value + 0.0, route, {"lp_value": -res.lp_value, "iterations": res.iterations,
                                                  "box_active": res.box_active,
                                                  "rotation": rotation_vector(res.measure)})
    if route == "inf-max-subsolution":
        val, diag = alpha_inf_max(model, c, **opts)
        return AlphaSample(c, val, route, {"softmax_history": diag["softmax_history"]})
    raise BadInput(f"unknown route {route!r}; expected one of {ROUTES}")


def _alpha_worker(args):
    model, c, route, opts = args
    return alpha(model, c, route, **opts)


class AlphaTable:
    """Cached alpha samples on demand, plus an optional regular c-grid."""

    def __init__(self, model, route="critical-value", cs=None, workers=1, **opts):
        self.model = model
        self.route = route
        self.opts = opts
        self.samples = {}
        if cs is not None:
            self.fill(cs, workers)

    def _key(self, c):
        return tuple(np.round(np.atleast_1d(np.asarray(c, float)), 12))

    def fill(self, cs, workers=1):
        cs = [np.atleast_1d(np.asarray(c, float)) for c in cs]
        todo = [c for c in cs if self._key(c) not in self.samples]
        if workers and workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(_alpha_worker, [(self.model, c, self.route, self.opts) for c in todo]))
        else:
            results = [alpha(self.model, c, self.route, **self.opts) for c in todo]
        for c, r in zip(todo, results):
            self.samples[self._key(c)] = r
        return self

    def sample(self, c):
        k = self._key(c)
        if k not in self.samples:
            self.samples[k] = alpha(self.model, np.array(k), self.route, **self.opts)
        return self.samples[k]

    def __call__(self, c):
        return self.sample(c).value

    def arrays(self):
        """Sorted ``(cs, values)`` of everything sampled so far."""
        keys = sorted(self.samples)
        cs = np.array(keys, float)
        vals = np.array([self.samples[k].value for k in keys])
        return cs, vals

    def to_csv(self, path):
        cs, vals = self.arrays()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"c_{i+1}" for i in range(cs.shape[1])] + ["alpha", "route"])
            for c, v in zip(cs, vals):
                w.writerow([f"{x:.12g}" for x in c] + [f"{v:.12g}", self.route])


# beta and subderivatives -------------------------------------------------------------------


def _quad_vertex(xs, ys):
    """Vertex of the parabola through three points (value, abscissa)."""
    A = np.vander(xs, 3)
    a, b, c0 = np.linalg.solve(A, ys)
    if a >= 0:
        i = int(np.argmax(ys))
        return ys[i], xs[i]
    xv = -b / (2 * a)
    return a * xv * xv + b * xv + c0, xv


def beta(model, h, alpha_table):
    """``beta(h) = max_c <c, h> - alpha(c)`` over the table, refined quadratically.

    Raises
    ------
    SupOnBoundary
        The maximizing grid point lies on the edge of the c-box.
    """
    h = np.atleast_1d(np.asarray(h, float))
    cs, vals = alpha_table.arrays()
    d = cs.shape[1]
    g = cs @ h - vals
    i = int(np.argmax(g))
    if d == 1:
        order = np.argsort(cs[:, 0])
        cs1, g1 = cs[order, 0], g[order]
        i = int(np.argmax(g1))
        best = g1[i]
        ties = np.nonzero(g1 >= best - 1e-12)[0]
        if i == 0 or i == len(g1) - 1:
            raise SupOnBoundary(f"sup of <c,h> - alpha at c-box edge c={cs1[i]:.6g}; enlarge the table")
        if len(ties) > 1:
            # flat of alpha: the sup is attained along an interval
            return BetaSample(h, float(best), np.array([cs1[ties[0]]]))
        val, cv = _quad_vertex(cs1[i - 1:i + 2], g1[i - 1:i + 2])
        return BetaSample(h, float(max(val, best)), np.array([cv if val >= best else cs1[i]]))
    # d >= 2: interior check plus per-axis parabolic correction
    lo, hi = cs.min(axis=0), cs.max(axis=0)
    ci = cs[i]
    if np.any(np.isclose(ci, lo)) or np.any(np.isclose(ci, hi)):
        raise SupOnBoundary(f"sup of <c,h> - alpha at c-box edge c={ci}")
    best, corr, cbest = g[i], 0.0, ci.copy()
    for ax in range(d):
        line = np.nonzero(np.all(np.isclose(np.delete(cs, ax, 1), np.delete(ci, ax)), axis=1))[0]
        xs = cs[line, ax]
        order = np.argsort(xs)
        xs, gs = xs[order], g[line][order]
        j = int(np.argmin(np.abs(xs - ci[ax])))
        if 0 < j < len(xs) - 1:
            val, xv = _quad_vertex(xs[j - 1:j + 2], gs[j - 1:j + 2])
            corr += max(val - best, 0.0)
            cbest[ax] = xv
    return BetaSample(h, float(best + corr), cbest)


def beta_search(alpha_table, h, step=0.25, fine=0.025, c_max=20.0):
    """``beta(h)`` for d = 1 without a preset c-box.

    A coarse c-grid is widened until the maximizer of ``c h - alpha(c)`` is
    interior, then refined with spacing ``fine`` around it.
    """
    h = float(np.atleast_1d(h)[0])
    lo, hi = -1.0, 1.0
    while True:
        cs = np.arange(lo, hi + step / 2, step)
        alpha_table.fill(cs)
        g = cs * h - np.array([alpha_table(c) for c in cs])
        i = int(np.argmax(g))
        if 0 < i < len(cs) - 1:
            break
        if i == 0:
            lo -= 2.0
        else:
            hi += 2.0
        if max(-lo, hi) > c_max:
            raise SupOnBoundary(f"no interior maximizer of c h - alpha(c) for |c| <= {c_max}")
    c0 = cs[i]
    alpha_table.fill(np.arange(c0 - step, c0 + step + fine / 2, fine))
    return beta(alpha_table.model, h, alpha_table)


def beta_table(alpha_table, hs):
    return [beta(alpha_table.model, h, alpha_table) for h in hs]


def subderivative_interval(alpha_table, c, delta=2e-2, flat_tol=FLAT_TOL):
    """One-sided slopes of alpha at ``c`` (d = 1), Richardson extrapolated.

    A side on which both secant slopes are below ``flat_tol`` is reported
    with slope exactly 0.
    """
    c = float(np.atleast_1d(c)[0])
    a0 = alpha_table(c)
    out = []
    for s in (-1.0, 1.0):
        a1 = alpha_table(c + s * delta)
        a2 = alpha_table(c + s * delta / 2)
        if abs(a1 - a0) <= flat_tol * delta and abs(a2 - a0) <= flat_tol * delta / 2:
            out.append(0.0)
            continue
        d1 = (a1 - a0) / (s * delta)
        d2 = (a2 - a0) / (s * delta / 2)
        out.append(2 * d2 - d1)
    return float(min(out)), float(max(out))


def _on_flat(alpha_table, a0, c0, c, flat_tol):
    # secant slope from c0 below flat_tol counts as "alpha(c) = alpha(c0)"
    return abs(alpha_table(c) - a0) <= flat_tol * abs(c - c0)


def flat_edge(alpha_table, direction=1.0, c0=0.0, tol=1e-4, flat_tol=FLAT_TOL, c_max=10.0):
    """End of the flat of alpha through ``c0`` along ``direction`` (d = 1).

    A point belongs to the flat when the secant slope of alpha from
    ``c0`` is at most ``flat_tol``; the edge is bisected to width ``tol``.
    """
    a0 = alpha_table(c0)
    lo, hi = 0.0, 0.25
    if not _on_flat(alpha_table, a0, c0, c0 + direction * tol, flat_tol):
        return c0
    lo = tol
    while _on_flat(alpha_table, a0, c0, c0 + direction * hi, flat_tol):
        lo = hi
        hi *= 2
        if hi > c_max:
            raise NoConvergence("alpha has no end to its flat within the search range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _on_flat(alpha_table, a0, c0, c0 + direction * mid, flat_tol):
            lo = mid
        else:
            hi = mid
    return c0 + direction * 0.5 * (lo + hi)


def beta_subderivative_at_zero(alpha_table, flat_tol=FLAT_TOL, tol=1e-4):
    """``d beta(0)``: the flat of alpha containing the minimizer of alpha."""
    cs, vals = alpha_table.arrays()
    c0 = 0.0 if len(cs) == 0 else float(cs[np.argmin(vals), 0])
    left = flat_edge(alpha_table, -1.0, c0, tol, flat_tol)
    right = flat_edge(alpha_table, 1.0, c0, tol, flat_tol)
    return left, right


def convexity_violation(cs, vals):
    """Largest midpoint-convexity defect of samples on a uniform 1-d grid."""
    vals = np.asarray(vals, float)
    if len(vals) < 3:
        return 0.0
    return float(np.max(vals[1:-1] - 0.5 * (vals[:-2] + vals[2:])))


def conjugate(xs, vals, ys):
    """Discrete Legendre-Fenchel transform ``max_i <x_i, y> - vals_i``."""
    xs = np.atleast_2d(np.asarray(xs, float).reshape(len(vals), -1))
    ys = np.atleast_2d(np.asarray(ys, float).reshape(-1, xs.shape[1]))
    return np.max(ys @ xs.T - np.asarray(vals)[None, :], axis=1)
