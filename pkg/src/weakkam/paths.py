"""Batched minimization of the discrete (midpoint-rule) action.

A batch holds any number of independent problems, each a polygon of
lifted nodes with uniform time step. Problems are either *open* (both
endpoints fixed) or *loops* (the last node is the first node shifted by
an integer winding, and the base node is free). All nodes of all
problems are concatenated, so the Hessian of the total action is one
block-tridiagonal matrix that is solved with a single banded
factorization per iteration; loops are closed with a per-problem Schur
complement on the base node.

The iteration is Levenberg-Marquardt: Newton steps on ``H + lam I`` with
a per-problem damping ``lam`` that shrinks on accepted steps and grows on
rejected ones, so each problem only ever moves downhill.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import BadInput

GTOL = 1e-8
MAX_ITER = 300
LAM0 = 1e-3
LAM_MIN = 1e-12
LAM_MAX = 1e12


@dataclass
class Problem:
    nodes: np.ndarray        # (N+1, d) initial lifted nodes
    T: float
    loop: bool = False
    tag: object = None


@dataclass
class Solution:
    nodes: np.ndarray
    T: float
    action: float
    grad_norm: float
    converged: bool
    iterations: int
    tag: object = None

    @property
    def dt(self):
        return self.T / (len(self.nodes) - 1)

    @property
    def velocities(self):
        return np.diff(self.nodes, axis=0) / self.dt


def discrete_action(model, nodes, T):
    """Midpoint-rule action ``sum dt L(mid_i, slope_i)`` of a lifted polygon."""
    nodes = np.asarray(nodes, float)
    n = len(nodes) - 1
    dt = T / n
    m = 0.5 * (nodes[1:] + nodes[:-1])
    s = (nodes[1:] - nodes[:-1]) / dt
    return float(dt * np.sum(model.L(m, s)))


class _Batch:
    def __init__(self, model, problems):
        self.model = model
        self.d = model.dim
        self.P = len(problems)
        sizes = np.array([len(p.nodes) for p in problems])
        if np.any(sizes < 3):
            raise BadInput("each path needs at least two segments")
        self.start = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.end = self.start + sizes - 1
        self.M = int(sizes.sum())
        self.X = np.concatenate([np.asarray(p.nodes, float) for p in problems])
        self.T = np.array([p.T for p in problems], float)
        self.dt_p = self.T / (sizes - 1)
        self.pid = np.repeat(np.arange(self.P), sizes)
        # segment j joins node j and j + 1
        link = np.ones(self.M, bool)
        link[self.end] = False
        self.seg = np.nonzero(link)[0]
        self.seg_pid = self.pid[self.seg]
        self.seg_dt = self.dt_p[self.seg_pid]
        self.loop = np.array([p.loop for p in problems], bool)
        self.loop_ids = np.nonzero(self.loop)[0]
        self.fixed = np.zeros(self.M, bool)
        self.fixed[self.start] = True
        self.fixed[self.end] = True

    def _eval(self, X, hess):
        l = self.seg
        dt = self.seg_dt[:, None]
        m = 0.5 * (X[l] + X[l + 1])
        s = (X[l + 1] - X[l]) / dt
        mod = self.model
        Lval = mod.L(m, s)
        action = np.bincount(self.seg_pid, weights=self.seg_dt * Lval, minlength=self.P)
        Lx = mod.L_x(m, s)
        Lv = mod.L_v(m, s)
        g = np.zeros_like(X)
        np.add.at(g, l, 0.5 * dt * Lx - Lv)
        np.add.at(g, l + 1, 0.5 * dt * Lx + Lv)
        if not hess:
            return action, g
        dt3 = dt[:, :, None]
        Lxx = mod.L_xx(m, s)
        Lvx = np.asarray(mod.L_vx(m, s))
        Lvv = np.asarray(mod.L_vv(m, s))
        Lxv = np.swapaxes(Lvx, -1, -2)
        sym = 0.5 * (Lxv + Lvx)
        quarter = 0.25 * dt3 * Lxx
        D = np.zeros((self.M, self.d, self.d))
        np.add.at(D, l, quarter - sym + Lvv / dt3)
        np.add.at(D, l + 1, quarter + sym + Lvv / dt3)
        O = np.zeros((self.M, self.d, self.d))
        O[l] = quarter + 0.5 * Lxv - 0.5 * Lvx - Lvv / dt3
        return action, g, D, O

    def _grad_norms(self, g):
        g = g.copy()
        lp = self.loop_ids
        g[self.start[lp]] += g[self.end[lp]]
        g[self.end[lp]] = 0.0
        open_ = ~self.loop
        g[self.start[open_]] = 0.0
        g[self.end[open_]] = 0.0
        return np.sqrt(np.bincount(self.pid, weights=np.sum(g * g, axis=1), minlength=self.P)), g

    def _step(self, g, D, O, lam):
        d, M = self.d, self.M
        bw = 2 * d - 1
        lamn = lam[self.pid] / self.dt_p[self.pid]
        Dm = D + lamn[:, None, None] * np.eye(d)
        Dm[self.fixed] = np.eye(d)
        Om = O.copy()
        Om[self.fixed] = 0.0
        Om[np.nonzero(self.fixed)[0] - 1] = 0.0
        ab = np.zeros((2 * bw + 1, M * d))
        for p in range(d):
            for q in range(d):
                ab[bw + p - q, np.arange(M) * d + q] = Dm[:, p, q]
                # upper block: row j*d+p, col (j+1)*d+q; lower block mirrored
                colsU = (np.arange(M - 1) + 1) * d + q
                ab[bw + p - d - q, colsU] = Om[:-1, p, q]
                colsL = np.arange(M - 1) * d + q
                ab[bw + d + p - q, colsL] = Om[:-1, q, p]
        nl = len(self.loop_ids)
        rhs = np.zeros((M, d, 1 + d))
        r0 = -g.copy()
        r0[self.fixed] = 0.0
        rhs[:, :, 0] = r0
        if nl:
            b = self.start[self.loop_ids]
            e = self.end[self.loop_ids]
            rhs[b + 1, :, 1:] += np.swapaxes(O[b], -1, -2)
            rhs[e - 1, :, 1:] += O[e - 1]
        Z = solve_banded((bw, bw), ab, rhs.reshape(M * d, 1 + d), check_finite=False)
        Z = Z.reshape(M, d, 1 + d)
        delta = Z[:, :, 0].copy()
        if nl:
            lp = self.loop_ids
            b = self.start[lp]
            e = self.end[lp]
            Hb = D[b] + D[e] + lamn[b][:, None, None] * np.eye(d)
            CZ = (np.einsum("kij,kil->kjl", np.swapaxes(O[b], -1, -2), Z[b + 1, :, 1:])
                  + np.einsum("kij,kil->kjl", O[e - 1], Z[e - 1, :, 1:]))
            Cz = (np.einsum("kij,ki->kj", np.swapaxes(O[b], -1, -2), Z[b + 1, :, 0])
                  + np.einsum("kij,ki->kj", O[e - 1], Z[e - 1, :, 0]))
            S = Hb - CZ
            rb = -(g[b] + g[e]) - Cz
            db = np.linalg.solve(S, rb[..., None])[..., 0]
            # interior correction, problem by problem through the node -> loop map
            loop_of_node = np.full(M, -1)
            for k, p in enumerate(lp):
                loop_of_node[self.start[p]:self.end[p] + 1] = k
            inner = (loop_of_node >= 0) & ~self.fixed
            k_in = loop_of_node[inner]
            delta[inner] -= np.einsum("nij,nj->ni", Z[inner, :, 1:], db[k_in])
            delta[b] = db
            delta[e] = db
        return delta

    def run(self, gtol=GTOL, max_iter=MAX_ITER, lam=None):
        X = self.X
        P = self.P
        lam = np.full(P, LAM0) if lam is None else lam.copy()
        action, g, D, O = self._eval(X, True)
        gn, _ = self._grad_norms(g)
        done = gn <= gtol
        stuck = np.zeros(P, bool)
        stall = np.zeros(P, int)
        it = 0
        for it in range(1, max_iter + 1):
            if np.all(done | stuck):
                break
            delta = self._step(g, D, O, lam)
            delta[(done | stuck)[self.pid]] = 0.0
            Xt = X + delta
            at, gt = self._eval(Xt, False)
            gnt, _ = self._grad_norms(gt)
            tol = 1e-13 * (1.0 + np.abs(action))
            accept = ((at < action - tol) | ((at <= action + tol) & (gnt < gn))) & ~done & ~stuck
            X = np.where(accept[self.pid][:, None], Xt, X)
            lam = np.where(accept, np.maximum(lam / 3.0, LAM_MIN), np.where(done | stuck, lam, lam * 4.0))
            stall = np.where(accept | done, 0, stall + 1)
            action, g, D, O = self._eval(X, True)
            gn, _ = self._grad_norms(g)
            done = done | (gn <= gtol)
            # no progress possible at round-off level
            stuck = stuck | (lam >= LAM_MAX) | (stall > 40)
        self.X = X
        conv = gn <= gtol
        nn = np.bincount(self.pid, minlength=P)
        conv |= stuck & (gn <= 1e3 * np.finfo(float).eps * (1.0 + np.abs(action)) * np.sqrt(nn))
        return action, gn, conv, it, lam, done | stuck


ROUND = 15
COARSE_MIN = 400


def _coarsen(nodes, k, loop):
    n = len(nodes) - 1
    m = max(8, n // k)
    idx = np.round(np.linspace(0, n, m + 1)).astype(int)
    return nodes[idx], idx


def _refine(coarse, idx, n):
    t = np.arange(n + 1)
    return np.stack([np.interp(t, idx, coarse[:, j]) for j in range(coarse.shape[1])], axis=1)


def solve(model, problems, gtol=GTOL, max_iter=MAX_ITER, multilevel=True):
    """Minimize the discrete action for a list of :class:`Problem`.

    Long paths are first solved on a time grid coarsened by a factor 5
    (recursively) and the interpolated result seeds the fine solve.
    Converged problems are dropped from the batch between rounds.
    Returns a list of :class:`Solution` in the same order.
    """
    if not problems:
        return []
    problems = list(problems)
    if multilevel:
        long_ = [i for i, p in enumerate(problems) if len(p.nodes) - 1 > COARSE_MIN]
        if long_:
            coarse, idxs = [], []
            for i in long_:
                p = problems[i]
                cn, idx = _coarsen(np.asarray(p.nodes, float), 5, p.loop)
                coarse.append(Problem(cn, p.T, p.loop, p.tag))
                idxs.append(idx)
            csol = solve(model, coarse, gtol=max(gtol, 1e-6), max_iter=max_iter, multilevel=True)
            for i, cs, idx in zip(long_, csol, idxs):
                p = problems[i]
                problems[i] = Problem(_refine(cs.nodes, idx, len(p.nodes) - 1), p.T, p.loop, p.tag)
    nodes = [np.asarray(p.nodes, float) for p in problems]
    P = len(problems)
    action = np.zeros(P)
    gn = np.zeros(P)
    conv = np.zeros(P, bool)
    iters = np.zeros(P, int)
    lam = np.full(P, LAM0)
    active = np.arange(P)
    used = 0
    while len(active) and used < max_iter:
        sub = [Problem(nodes[i], problems[i].T, problems[i].loop) for i in active]
        batch = _Batch(model, sub)
        n_it = min(ROUND, max_iter - used)
        a, g, c, it, lam_a, fin = batch.run(gtol, n_it, lam[active])
        used += it
        for j, i in enumerate(active):
            nodes[i] = batch.X[batch.start[j]:batch.end[j] + 1].copy()
        action[active], gn[active], conv[active], lam[active] = a, g, c, lam_a
        iters[active] = used
        active = active[~fin]
    return [Solution(nodes[i], float(p.T), float(action[i]), float(gn[i]), bool(conv[i]), int(iters[i]), p.tag)
            for i, p in enumerate(problems)]


def node_count(T, dt_max, n_min=8):
    return max(n_min, int(np.ceil(T / dt_max)))


def initial_open(x0, x1, T, n, shape="line", amp=0.25, direction=None):
    """Initial polygon from lifted ``x0`` to lifted ``x1``.

    ``shape`` is ``line``, ``half`` (one half-sine bump) or ``full``
    (one full sine period); the bump points along ``direction``.
    """
    x0 = np.atleast_1d(np.asarray(x0, float))
    x1 = np.atleast_1d(np.asarray(x1, float))
    s = np.linspace(0.0, 1.0, n + 1)[:, None]
    nodes = x0 + s * (x1 - x0)
    if shape != "line":
        e = np.zeros_like(x0)
        if direction is None:
            e[0] = 1.0
        else:
            e = np.asarray(direction, float)
        bump = np.sin(np.pi * s) if shape == "half" else np.sin(2 * np.pi * s)
        nodes = nodes + amp * bump * e
    return nodes


def initial_loop(base, winding, n, amp=0.0, harmonic=1, phase=0.0):
    """Fourier-shaped closed curve with the given winding."""
    base = np.atleast_1d(np.asarray(base, float))
    w = np.atleast_1d(np.asarray(winding, float))
    d = len(base)
    s = np.linspace(0.0, 1.0, n + 1)[:, None]
    nodes = base + s * w
    if amp:
        e = np.zeros(d)
        e[0] = 1.0
        nodes = nodes + amp * np.sin(2 * np.pi * harmonic * s + phase) * e - amp * np.sin(phase) * e
        if d > 1:
            e2 = np.zeros(d)
            e2[1] = 1.0
            nodes = nodes + amp * (np.cos(2 * np.pi * harmonic * s + phase) - np.cos(phase)) * e2
    return nodes
