"""Fixed-time minimizers, Mañé potential, critical value and Peierls barrier.

The twisted Lagrangian ``L_eta = L - eta.v`` differs from ``L`` by a closed
form, so its action along a path only changes by the line integral of
``eta``, which depends on the lifted endpoints alone. All minimizations
therefore run on ``L`` and the form contributes the exact term
``-(c.(y - x) + f(y) - f(x))``; on loops this is ``-c.w``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import BadInput, BracketNotFound, NoConvergence, NotStabilized
from .lagrangian import OneForm
from .paths import Problem, discrete_action, initial_loop, initial_open, node_count, solve
from .torus import minimal_image, torus_grid, wrap

MINUS_INFINITY = float("-inf")
DIVERGENCE_THRESHOLD = -1e6
DT_MAX = 0.01
T_GRID = np.geomspace(0.05, 50.0, 32)
LOOP_T_GRID = np.geomspace(0.1, 20.0, 24)
LADDER_T0 = 5.0
LADDER_TMAX = 160.0
LADDER_TOL = 1e-3


@dataclass
class LiftedPath:
    """Discrete curve on the universal cover with uniform time grid."""
    T: float
    nodes: np.ndarray
    action: float
    winding: np.ndarray | None = None
    converged: bool = True
    grad_norm: float = 0.0

    @property
    def dt(self):
        return self.T / (len(self.nodes) - 1)

    @property
    def times(self):
        return np.linspace(0.0, self.T, len(self.nodes))


@dataclass
class PotentialValue:
    value: float
    argmin_T: float | None = None
    winding: np.ndarray | None = None
    certificate: list = field(default_factory=list)
    witness: dict | None = None

    @property
    def is_minus_infinity(self):
        return self.value == MINUS_INFINITY

    def __float__(self):
        return float(self.value)


def _form(form, dim):
    return OneForm(np.zeros(dim)) if form is None else form


def _as_point(x, dim):
    x = np.atleast_1d(np.asarray(x, float))
    if x.shape != (dim,):
        raise BadInput(f"expected a point with {dim} coordinates")
    return x


def form_term(form, x0, x1):
    """Exact ``-int eta`` along any path from lifted ``x0`` to lifted ``x1``."""
    return -float(form.line_integral(x0, x1))


def path_action(model, form, nodes, T):
    """Discrete ``L_eta`` action of a lifted polygon."""
    nodes = np.asarray(nodes, float)
    form = _form(form, model.dim)
    return discrete_action(model, nodes, T) + form_term(form, nodes[0], nodes[-1])


def _direction(dim, rng):
    if dim == 1:
        return np.ones(1)
    e = rng.normal(size=dim)
    return e / np.linalg.norm(e)


def _open_starts(x0, x1, T, n, rng, amp=0.25, n_starts=4):
    e = _direction(len(x0), rng)
    shapes = [("line", 0.0), ("half", amp), ("half", -amp), ("full", amp)][:n_starts]
    return [initial_open(x0, x1, T, n, sh, a, e) for sh, a in shapes]


def stretch(nodes, T_old, T_new, n_new):
    """Retime a path to a longer horizon by waiting at its slowest node."""
    nodes = np.asarray(nodes, float)
    n = len(nodes) - 1
    t = np.linspace(0.0, T_old, n + 1)
    speed = np.linalg.norm(np.gradient(nodes, axis=0), axis=1)
    j = int(np.argmin(speed))
    extra = T_new - T_old
    tt = np.concatenate([t[:j + 1], t[j:] + extra])
    xx = np.concatenate([nodes[:j + 1], nodes[j:]])
    s = np.linspace(0.0, T_new, n_new + 1)
    if extra <= 0:
        tt, xx = t * (T_new / T_old), nodes
    return np.stack([np.interp(s, tt, xx[:, k]) for k in range(nodes.shape[1])], axis=1)


def _windings(dim, radius, center=None):
    c = np.zeros(dim, int) if center is None else np.asarray(center, int)
    rng = range(-radius, radius + 1)
    return [c + np.array(w) for w in itertools.product(rng, repeat=dim)]


def fixed_time_batch(model, form, jobs, dt_max=DT_MAX, n_starts=4, seed=0, extra_starts=None):
    """Solve many fixed-time problems and keep the best start of each.

    ``jobs`` is a list of ``(x, y, winding, T)`` with torus points and
    integer winding; the lifted target is ``y + winding``. Returns a list
    of :class:`LiftedPath` (best over starts) in job order.
    """
    rng = np.random.default_rng(seed)
    form = _form(form, model.dim)
    problems = []
    for j, (x, y, w, T) in enumerate(jobs):
        if T <= 0:
            raise BadInput("time horizon must be positive")
        n = node_count(T, dt_max)
        x0 = np.asarray(x, float)
        x1 = np.asarray(y, float) + np.asarray(w, float)
        for init in _open_starts(x0, x1, T, n, rng, n_starts=n_starts):
            problems.append(Problem(init, T, tag=j))
        for init in (extra_starts or {}).get(j, []):
            problems.append(Problem(init, T, tag=j))
    sols = solve(model, problems)
    best = [None] * len(jobs)
    for s in sols:
        j = s.tag
        if not s.converged:
            continue
        if best[j] is None or s.action < best[j].action:
            best[j] = s
    out = []
    for j, (x, y, w, T) in enumerate(jobs):
        s = best[j]
        if s is None:
            # fall back on the lowest unconverged start, flagged
            cands = [t for t in sols if t.tag == j]
            s = min(cands, key=lambda t: t.action)
            conv = False
        else:
            conv = True
        a = s.action + form_term(form, s.nodes[0], s.nodes[-1])
        out.append(LiftedPath(T, s.nodes, a, np.asarray(w, int), conv, s.grad_norm))
    return out


def minimize_action_fixed_time(model, form, x, y, winding, T, N=None, dt_max=DT_MAX, seed=0):
    """Minimize the discrete ``L_eta`` action from ``x`` to ``y + winding`` in time ``T``.

    Parameters
    ----------
    model : Lagrangian
    form : OneForm or None
    x, y : array_like
        Torus points (used as given; lifts are ``x`` and ``y + winding``).
    winding : array_like of int
    T : float
    N : int, optional
        Number of segments (at least 8). Default ``ceil(T / dt_max)``.

    Returns
    -------
    path : LiftedPath
    action : float

    Raises
    ------
    BadInput
        ``T <= 0`` or ``N < 8``.
    NoConvergence
        No start reached the gradient tolerance.
    """
    d = model.dim
    if not T > 0:
        raise BadInput("T must be positive")
    if N is not None and N < 8:
        raise BadInput("N must be at least 8")
    x = _as_point(x, d)
    y = _as_point(y, d)
    w = np.atleast_1d(np.asarray(winding, int))
    dtm = dt_max if N is None else T / N
    path = fixed_time_batch(model, form, [(x, y, w, T)], dt_max=dtm * (1 + 1e-12), seed=seed)[0]
    if not path.converged:
        raise NoConvergence(f"path minimization stalled (gradient norm {path.grad_norm:.2e})")
    return path, path.action


def min_action_over_windings(model, form, x, y, T, N=None, winding_radius=2, center=None,
                             dt_max=DT_MAX, seed=0, return_path=False):
    """``h_{eta,T}(x, y)``: best fixed-time action over a box of windings."""
    if winding_radius < 0:
        raise BadInput("winding_radius must be nonnegative")
    d = model.dim
    x = _as_point(x, d)
    y = _as_point(y, d)
    dtm = dt_max if N is None else T / N * (1 + 1e-12)
    jobs = [(x, y, w, T) for w in _windings(d, winding_radius, center)]
    paths = fixed_time_batch(model, form, jobs, dt_max=dtm, seed=seed)
    best = min(paths, key=lambda p: p.action)
    return (best.action, best) if return_path else best.action


# Loops and the critical value ---------------------------------------------------


def _point_loop_min(model, n=256):
    """``min_x L(x, 0)`` and its location (grid search plus polish)."""
    d = model.dim
    m = n if d == 1 else 48
    X = torus_grid(m, d)
    vals = model.L(X, np.zeros_like(X))
    i = int(np.argmin(vals))
    from scipy.optimize import minimize
    res = minimize(lambda z: float(model.L(z, np.zeros(d))), X[i],
                   jac=lambda z: model.L_x(z, np.zeros(d)), method="BFGS", options={"gtol": 1e-12})
    if res.fun <= vals[i]:
        return float(res.fun), wrap(res.x)
    return float(vals[i]), X[i]


class LoopFamily:
    """Minimal-action closed curves of ``L`` for each winding and period.

    Entries are independent of the cohomology class: a loop of winding
    ``w`` has ``L_eta`` action ``a(w, T) - c.w``.
    """

    def __init__(self, model, winding_radius=2, T_grid=LOOP_T_GRID, dt_max=0.02, seed=0):
        self.model = model
        self.d = model.dim
        self.radius = winding_radius
        self.T_grid = np.asarray(T_grid, float)
        self.dt_max = dt_max
        self.seed = seed
        self.point_min, self.point_x = _point_loop_min(model)
        self.entries = {}    # (tuple w, T) -> (action, nodes)
        self.fine = {}
        self._build()

    def _starts(self, w, T, rng):
        d = self.d
        n = node_count(T, self.dt_max)
        bases = [self.point_x, wrap(self.point_x + 0.5)]
        out = []
        for b in bases:
            if np.any(w != 0):
                out.append(initial_loop(b, w, n))
                out.append(initial_loop(b, w, n, amp=0.1, phase=rng.uniform(0, 2 * np.pi)))
            else:
                out.append(initial_loop(b, w, n, amp=0.2))
        return out

    def _build(self):
        rng = np.random.default_rng(self.seed)
        problems = []
        for w in _windings(self.d, self.radius):
            for T in self.T_grid:
                for init in self._starts(w, T, rng):
                    problems.append(Problem(init, float(T), loop=True, tag=(tuple(w), float(T))))
        for s in solve(self.model, problems):
            if not s.converged:
                continue
            cur = self.entries.get(s.tag)
            if cur is None or s.action < cur[0]:
                self.entries[s.tag] = (s.action, s.nodes)

    def loop_action(self, w, T, dt_max=None):
        """Minimal loop action for one ``(w, T)``, cached per time step."""
        w = tuple(int(v) for v in np.atleast_1d(w))
        T = float(T)
        fine = dt_max is not None and dt_max < self.dt_max
        key = (w, T, dt_max) if fine else (w, T)
        cache = self.fine if fine else self.entries
        if key in cache:
            return cache[key][0]
        dt = dt_max if fine else self.dt_max
        n = node_count(T, dt)
        rng = np.random.default_rng(self.seed)
        starts = [self._resample(z, n) for z in self._starts(np.array(w), T, rng)]
        # warm start from the nearest cached period
        near = [k for k in self.entries if k[0] == w]
        if near:
            k0 = min(near, key=lambda k: abs(np.log(k[1] / T)))
            starts.append(self._resample(self.entries[k0][1], n))
        best = None
        for s in solve(self.model, [Problem(z, T, loop=True) for z in starts]):
            if s.converged and (best is None or s.action < best[0]):
                best = (s.action, s.nodes)
        if best is None:
            raise NoConvergence(f"loop minimization failed for winding {w}, T={T}")
        cache[key] = best
        return best[0]

    @staticmethod
    def _resample(nodes, n):
        s_old = np.linspace(0.0, 1.0, len(nodes))
        s = np.linspace(0.0, 1.0, n + 1)
        return np.stack([np.interp(s, s_old, nodes[:, k]) for k in range(nodes.shape[1])], axis=1)

    def table(self, c):
        """Rows ``(w, T, L_eta action)`` for the class ``c``."""
        c = np.atleast_1d(np.asarray(c, float))
        return [(np.array(w), T, a - float(c @ np.array(w))) for (w, T), (a, _) in self.entries.items()]

    def nodes(self, w, T):
        return self.entries[(tuple(int(v) for v in np.atleast_1d(w)), float(T))][1]


_FAMILIES = {}


def loop_family(model, winding_radius=2):
    key = (id(model), winding_radius)
    fam = _FAMILIES.get(key)
    if fam is None or fam.model is not model:
        fam = LoopFamily(model, winding_radius)
        _FAMILIES[key] = fam
    return fam


def negative_loop(model, form, k, winding_radius=2):
    """A closed curve with negative ``L_eta + k`` action, or ``None``."""
    form = _form(form, model.dim)
    fam = loop_family(model, winding_radius)
    if fam.point_min + k < 0:
        return {"winding": np.zeros(model.dim, int), "T": 1.0, "action": fam.point_min + k,
                "nodes": np.vstack([fam.point_x, fam.point_x]), "kind": "point"}
    best = None
    for w, T, a in fam.table(form.c):
        val = a + k * T
        if val < 0 and (best is None or val < best["action"]):
            best = {"winding": w, "T": T, "action": val, "nodes": fam.nodes(w, T), "kind": "loop"}
    return best


@dataclass
class CriticalValue:
    value: float
    bracket: tuple
    winding: np.ndarray | None
    T: float | None
    rotation: np.ndarray | None

    def __float__(self):
        return float(self.value)


def mane_critical_value(model, form=None, winding_radius=2, tol=1e-4, refine=True, details=False,
                        dt_fine=0.0025):
    """Least ``k`` for which every closed curve has nonnegative ``L_eta + k`` action.

    Loops are taken from :class:`LoopFamily` (point loops plus loops of each
    winding on a period grid, refined in the period around the best one).
    The returned value is the supremum of ``-A_{L_eta}(gamma) / T(gamma)``
    over the family; a bisection on ``k`` over the same cached loops
    brackets it to width ``tol``.

    Raises
    ------
    BracketNotFound
        If the starting interval does not straddle the critical value.
    """
    form = _form(form, model.dim)
    fam = loop_family(model, winding_radius)
    c = form.c
    cands = [(-fam.point_min, None, None)]
    for w, T, a in fam.table(c):
        cands.append((-a / T, w, T))
    kbest, wbest, Tbest = max(cands, key=lambda r: r[0])
    if refine and wbest is not None:
        i = int(np.argmin(np.abs(fam.T_grid - Tbest)))
        lo = fam.T_grid[max(i - 1, 0)]
        hi = fam.T_grid[min(i + 1, len(fam.T_grid) - 1)]
        cw = float(c @ wbest)

        def neg_rate(logT):
            T = float(np.exp(logT))
            return -(cw - fam.loop_action(wbest, T, dt_fine)) / T

        res = minimize_scalar(neg_rate, bounds=(np.log(lo), np.log(hi)), method="bounded",
                              options={"xatol": 1e-5})
        if -res.fun > kbest:
            kbest, Tbest = -float(res.fun), float(np.exp(res.x))
    # bisection over the cached family, as an independent bracket check
    rows = [(fam.point_min, 1.0, 0.0)]
    rows += [(a, T, 0.0) for _, T, a in fam.table(c)]
    if wbest is not None:
        rows.append((fam.loop_action(wbest, Tbest, dt_fine) - float(c @ wbest), Tbest, 0.0))

    def has_negative(k):
        return any(a + k * T < -1e-12 for a, T, _ in rows)

    k_lo = -fam.point_min - 1.0
    k_hi = -min(a / T for a, T, _ in rows) + 1e-9
    if not has_negative(k_lo) or has_negative(k_hi):
        raise BracketNotFound(f"[{k_lo:.6g}, {k_hi:.6g}] does not straddle the critical value")
    while k_hi - k_lo > tol:
        mid = 0.5 * (k_lo + k_hi)
        if has_negative(mid):
            k_lo = mid
        else:
            k_hi = mid
    kbest = min(max(kbest, k_lo), k_hi)
    rot = None if wbest is None else np.asarray(wbest, float) / Tbest
    if kbest == -fam.point_min or wbest is None:
        rot = np.zeros(model.dim)
    out = CriticalValue(float(kbest) + 0.0, (k_lo, k_hi), wbest, Tbest, rot)
    return out if details else out.value


# Mañé potential ---------------------------------------------------------------------


def _divergent(model, form, k, x, y, winding_radius):
    loop = negative_loop(model, form, k, winding_radius)
    if loop is None:
        return None
    form = _form(form, model.dim)
    base = loop["nodes"][0]
    # finite upper bound for reaching the loop and leaving it
    a_in = _quick_h(model, form, x, wrap(base))
    a_out = _quick_h(model, form, wrap(base), y)
    cost = a_in + a_out + 2.0 * k
    reps = int(np.ceil((cost - DIVERGENCE_THRESHOLD) / -loop["action"])) + 1
    total = cost + reps * loop["action"]
    loop = dict(loop, repetitions=reps, bound=total, approach=a_in, leave=a_out)
    return PotentialValue(MINUS_INFINITY, None, None, [(loop["T"] * reps + 2.0, total)], loop)


def _quick_h(model, form, x, y, T=1.0):
    d = model.dim
    dx = minimal_image(np.asarray(y, float) - np.asarray(x, float))
    n = node_count(T, DT_MAX)
    s = solve(model, [Problem(initial_open(x, x + dx, T, n), T)])[0]
    return s.action + form_term(_form(form, d), s.nodes[0], s.nodes[-1])


def mane_potential(model, form, k, x, y, T_grid=T_GRID, winding_radius=2, windings=None,
                   dt_max=DT_MAX, refine=True, check_divergence=True, seed=0):
    """``Phi_{c,k}(x, y) = inf_T h_{eta,T}(x, y) + k T``.

    The infimum is taken over a logarithmic grid of horizons and refined
    by bounded Brent iteration around the best grid point. If a closed
    curve with negative ``L_eta + k`` action exists the value is
    ``MINUS_INFINITY`` and the loop is attached as witness.
    """
    d = model.dim
    form = _form(form, d)
    x = _as_point(x, d)
    y = _as_point(y, d)
    if check_divergence:
        div = _divergent(model, form, k, x, y, winding_radius)
        if div is not None:
            return div
    ws = _windings(d, winding_radius) if windings is None else [np.atleast_1d(np.asarray(w, int)) for w in windings]
    jobs = [(x, y, w, float(T)) for T in T_grid for w in ws]
    paths = fixed_time_batch(model, form, jobs, dt_max=dt_max, seed=seed)
    cert = []
    best = None
    for p in paths:
        val = p.action + k * p.T
        cert.append((p.T, val))
        if best is None or val < best[0]:
            best = (val, p)
    val, p = best
    T_best, w_best = p.T, p.winding
    if refine:
        grid = np.asarray(T_grid, float)
        i = int(np.argmin(np.abs(grid - T_best)))
        if 0 < i < len(grid) - 1:
            cache = {}

            def f(logT):
                T = float(np.exp(logT))
                n = node_count(T, dt_max)
                init = {0: [stretch(p.nodes, p.T, T, n)]}
                q = fixed_time_batch(model, form, [(x, y, w_best, T)], dt_max=dt_max, n_starts=1,
                                     seed=seed, extra_starts=init)[0]
                cache[T] = q
                return q.action + k * T

            res = minimize_scalar(f, bounds=(np.log(grid[i - 1]), np.log(grid[i + 1])), method="bounded",
                                  options={"xatol": 1e-4})
            if res.fun < val:
                val, T_best = float(res.fun), float(np.exp(res.x))
                cert.append((T_best, val))
    return PotentialValue(float(val), T_best, w_best, cert, None)


def mane_potential_table(model, form, k, points, closure=True, **kw):
    """Matrix ``Phi[i, j] = Phi_{c,k}(points[i], points[j])``.

    With ``closure`` the table is replaced by its min-plus closure, the
    largest matrix below the computed one that satisfies the triangle
    inequality exactly (each closed entry is still realized by a
    concatenation of computed paths).
    """
    pts = np.atleast_2d(np.asarray(points, float))
    n = len(pts)
    P = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            v = mane_potential(model, form, k, pts[i], pts[j], **kw).value
            P[i, j] = v
    if closure:
        P = minplus_closure(P)
    return P


def minplus_closure(P):
    """Floyd-Warshall closure in the (min, +) semiring."""
    P = np.array(P, float)
    for m in range(len(P)):
        P = np.minimum(P, P[:, m:m + 1] + P[m:m + 1, :])
    return P


def lipschitz_constant(model, form=None, k=0.0, n=64):
    """``Q + k`` with ``Q = max_{|v|=1} L_eta(x, v)``, sampled."""
    d = model.dim
    X = torus_grid(n if d == 1 else 16, d)
    if d == 1:
        V = np.array([[1.0], [-1.0]])
    else:
        ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        V = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    XX = np.repeat(X, len(V), axis=0)
    VV = np.tile(V, (len(X), 1))
    vals = model.L(XX, VV)
    if form is not None:
        vals = vals - np.sum(form.eval(XX) * VV, axis=-1)
    return float(np.max(vals)) + k


# Peierls barrier ---------------------------------------------------------------


@dataclass
class BarrierValue:
    value: float
    ladder: list

    def __float__(self):
        return float(self.value)


def peierls_barrier(model, form, alpha_c, x, y, T0=LADDER_T0, T_max=LADDER_TMAX, tol=LADDER_TOL,
                    winding_radius=2, rotation=None, dt_max=DT_MAX, seed=0, details=False):
    """``h_eta(x, y) = lim_t h_{eta,t}(x, y) + alpha(c) t`` on a doubling ladder.

    Parameters
    ----------
    rotation : array_like, optional
        Rotation vector of the minimizing measures. When given, windings
        are searched around ``rotation * t`` instead of around zero.

    Raises
    ------
    NotStabilized
        Consecutive ladder values still differ by more than ``tol`` at
        ``T_max``; the ladder is attached to the exception.
    """
    d = model.dim
    form = _form(form, d)
    x = _as_point(x, d)
    y = _as_point(y, d)
    ladder = []
    prev_best = None
    T = float(T0)
    while True:
        center = None
        if rotation is not None:
            center = np.round(np.asarray(rotation, float) * T + (x - y)).astype(int)
        jobs = [(x, y, w, T) for w in _windings(d, winding_radius, center)]
        extra = {}
        if prev_best is not None:
            for j, (_, _, w, _) in enumerate(jobs):
                if np.array_equal(w, prev_best.winding):
                    extra[j] = [stretch(prev_best.nodes, prev_best.T, T, node_count(T, dt_max))]
        paths = fixed_time_batch(model, form, jobs, dt_max=dt_max, seed=seed, extra_starts=extra)
        best = min(paths, key=lambda p: p.action)
        val = best.action + alpha_c * T
        ladder.append((T, val))
        if len(ladder) >= 2 and abs(ladder[-1][1] - ladder[-2][1]) <= tol:
            out = BarrierValue(val, ladder)
            return out if details else out.value
        if T >= T_max:
            raise NotStabilized(f"Peierls ladder not stabilized at T={T:g}: {ladder}", ladder)
        prev_best = best
        T = min(2 * T, T_max)


def delta_pseudometric(model, form, alpha_c, x, y, **kw):
    """``delta_c(x, y) = h_eta(x, y) + h_eta(y, x)``."""
    return peierls_barrier(model, form, alpha_c, x, y, **kw) + peierls_barrier(model, form, alpha_c, y, x, **kw)
