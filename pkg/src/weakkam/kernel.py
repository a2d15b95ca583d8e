"""Short-time action kernels on a periodic grid and their min-plus algebra.

The kernel ``K[i, j]`` is the least ``L_eta`` action over time ``tau``
of a path from grid node ``x_i`` to grid node ``x_j`` (minimized over the
lifts of ``x_j``), together with the lifted displacement that realizes
it. Longer times are obtained by min-plus squaring, and potentials,
barriers and Lax-Oleinik operators all reduce to (min, +) matrix
operations on these tables. Only one-dimensional tori are supported: the
tables are dense ``n x n``.

Kernels are cached on disk under ``$WEAKKAM_CACHE_DIR`` (default
``~/.cache/weakkam``) as ``.npy`` tables with a JSON sidecar, keyed by a
hash of the model, the form and the grid settings.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadInput, NoConvergence
from .lagrangian import OneForm
from .paths import Problem, initial_open, node_count, solve

CACHE_ENV = "WEAKKAM_CACHE_DIR"
KERNEL_VERSION = 1
SUBSTEPS = 3          # base kernel runs over tau / 2**SUBSTEPS
HOP = 0.75            # largest lifted displacement of a base step
DT_MAX = 0.01
CHUNK = 32


@dataclass
class Kernel:
    """Min-action table over a fixed time on the grid ``i / n``.

    Attributes
    ----------
    K : ndarray, shape (n, n)
        ``K[i, j]`` is the ``L_eta`` action from ``x_i`` to ``x_j``.
    shift : ndarray, shape (n, n)
        Lifted displacement of the minimizing path.
    tau : float
    c : ndarray
    """
    K: np.ndarray
    shift: np.ndarray
    tau: float
    c: np.ndarray

    @property
    def n(self):
        return len(self.K)

    @property
    def x(self):
        return np.arange(self.n) / self.n

    def square(self):
        K, arg = minplus(self.K, self.K)
        rows = np.arange(self.n)[:, None]
        shift = self.shift[rows, arg] + self.shift[arg, np.arange(self.n)[None, :]]
        return Kernel(K, shift, 2 * self.tau, self.c)


def minplus(A, B):
    """(min, +) product; returns ``C`` and the index of the minimizing middle node."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    n = len(A)
    C = np.empty((n, B.shape[1]))
    arg = np.empty((n, B.shape[1]), int)
    for s in range(0, n, CHUNK):
        S = A[s:s + CHUNK, :, None] + B[None, :, :]
        arg[s:s + CHUNK] = np.argmin(S, axis=1)
        C[s:s + CHUNK] = np.take_along_axis(S, arg[s:s + CHUNK, None, :], axis=1)[:, 0]
    return C, arg


def closure(A):
    """Floyd-Warshall: least weight over paths of one or more steps."""
    P = np.array(A, float)
    for m in range(len(P)):
        np.minimum(P, P[:, m:m + 1] + P[m:m + 1, :], out=P)
    return P


def min_cycle_mean(A):
    """Least mean weight of a cycle of the complete graph with weights ``A`` (Karp)."""
    A = np.asarray(A, float)
    n = len(A)
    D = np.empty((n + 1, n))
    D[0] = 0.0
    for k in range(1, n + 1):
        D[k] = np.min(D[k - 1][:, None] + A, axis=0)
    ks = np.arange(n)[:, None]
    return float(np.min(np.max((D[n][None, :] - D[:n]) / (n - ks), axis=0)))


def _fingerprint(model, form):
    rng = np.random.default_rng(12345)
    x = rng.random((64, model.dim))
    v = rng.normal(0.0, 2.0, (64, model.dim))
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(model.L(x, v), float).tobytes())
    h.update(np.ascontiguousarray(form.eval(x), float).tobytes())
    h.update(np.ascontiguousarray(form.primitive(x), float).tobytes())
    if hasattr(model, "to_dict"):
        h.update(json.dumps(model.to_dict(), sort_keys=True, default=str).encode())
    return h.hexdigest()


def cache_dir():
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "weakkam"))


def _base_kernel(model, form, n, tau, dt_max):
    xs = np.arange(n) / n
    d = (xs[None, :] - xs[:, None] + 0.5) % 1.0 - 0.5
    shifts = [d, d - 1.0, d + 1.0]
    nn = node_count(tau, dt_max)
    jobs, problems = [], []
    for s in shifts:
        for i, j in zip(*np.nonzero(np.abs(s) <= HOP)):
            jobs.append((i, j, s[i, j]))
            problems.append(Problem(initial_open([xs[i]], [xs[i] + s[i, j]], tau, nn), tau))
    sols = solve(model, problems)
    bad = sum(not s.converged for s in sols)
    if bad:
        raise NoConvergence(f"{bad} kernel paths did not converge")
    K = np.full((n, n), np.inf)
    shift = np.zeros((n, n))
    for (i, j, s), sol in zip(jobs, sols):
        a = sol.action - float(form.line_integral(np.array([xs[i]]), np.array([xs[i] + s])))
        if a < K[i, j]:
            K[i, j] = a
            shift[i, j] = s
    return Kernel(K, shift, tau, np.array(form.c, float))


def action_kernel(model, form=None, n=256, tau=1.0, substeps=SUBSTEPS, dt_max=DT_MAX, cache=True):
    """Kernel over time ``tau`` on ``n`` grid nodes.

    The base table is computed over ``tau / 2**substeps`` (short enough for
    the fixed-time problem to be strictly convex, so one straight start
    suffices) and squared ``substeps`` times.

    Parameters
    ----------
    model : Lagrangian
        One-dimensional model.
    form : OneForm, optional
    cache : bool
        Read and write the disk cache.

    Raises
    ------
    BadInput
        ``model.dim != 1`` or non-positive ``tau``.
    NoConvergence
        A base path failed to converge.
    """
    if model.dim != 1:
        raise BadInput("grid kernels are implemented for one-dimensional tori")
    if tau <= 0 or n < 4:
        raise BadInput("need tau > 0 and at least 4 grid nodes")
    form = OneForm(np.zeros(1)) if form is None else form
    cfg = {"version": KERNEL_VERSION, "model": _fingerprint(model, form), "n": int(n),
           "tau": float(tau), "substeps": int(substeps), "dt_max": float(dt_max), "hop": HOP}
    key = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:24]
    path = cache_dir() / f"kernel-{key}.npy"
    if cache and path.exists():
        data = np.load(path)
        return Kernel(data[0], data[1], float(tau), np.array(form.c, float))
    if substeps:
        ker = action_kernel(model, form, n, tau / 2 ** substeps, 0, dt_max, cache)
        for _ in range(substeps):
            ker = ker.square()
    else:
        ker = _base_kernel(model, form, n, tau, dt_max)
    if cache:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp.npy")
            np.save(tmp, np.stack([ker.K, ker.shift]))
            os.replace(tmp, path)
            cfg["c"] = ker.c.tolist()
            path.with_suffix(".json").write_text(json.dumps(cfg, indent=2, sort_keys=True))
        except OSError:
            pass
    return ker


def interp_periodic(row, x):
    """Linear interpolation of values on the grid ``i / n`` at torus points ``x``."""
    row = np.asarray(row, float)
    n = row.shape[-1]
    s = (np.asarray(x, float) % 1.0) * n
    i0 = np.floor(s).astype(int) % n
    f = s - np.floor(s)
    return (1 - f) * row[..., i0] + f * row[..., (i0 + 1) % n]


def interp2_periodic(P, x, y):
    """Bilinear interpolation of a periodic table ``P[i, j]`` at ``(x, y)`` pairs."""
    n = len(P)
    sx = (np.asarray(x, float) % 1.0) * n
    sy = (np.asarray(y, float) % 1.0) * n
    i0 = np.floor(sx).astype(int) % n
    j0 = np.floor(sy).astype(int) % n
    fx = sx - np.floor(sx)
    fy = sy - np.floor(sy)
    i1, j1 = (i0 + 1) % n, (j0 + 1) % n
    return ((1 - fx) * (1 - fy) * P[i0, j0] + fx * (1 - fy) * P[i1, j0]
            + (1 - fx) * fy * P[i0, j1] + fx * fy * P[i1, j1])


@dataclass
class CriticalTables:
    """Potential and barrier tables at the kernel's own critical level.

    ``alpha`` is minus the least cycle mean per unit time of the base
    kernel; ``phi`` is the closure of ``K + alpha tau`` with zero diagonal
    and ``barrier`` is ``min_z phi[:, z] + phi[z, :]`` over the nodes ``z``
    lying on zero-weight cycles.
    """
    kernel: Kernel
    alpha: float
    phi: np.ndarray
    barrier: np.ndarray
    critical: np.ndarray


def critical_tables(model, form=None, n=128, tau=0.125, dt_max=DT_MAX, cache=True, crit_tol=1e-9):
    ker = action_kernel(model, form, n=n, tau=tau, substeps=0, dt_max=dt_max, cache=cache)
    lam = min_cycle_mean(ker.K)
    A = ker.K - lam
    plus = closure(A)
    scale = max(1.0, float(np.max(np.abs(A[np.isfinite(A)]))))
    diag = np.diag(plus)
    crit = np.nonzero(diag <= crit_tol * scale)[0]
    phi = plus.copy()
    np.fill_diagonal(phi, np.minimum(np.diag(phi), 0.0))
    barrier = np.min(phi[:, crit, None] + phi[None, crit, :], axis=1)
    barrier = np.maximum(barrier, 0.0)
    return CriticalTables(ker, -lam / tau, phi, barrier, crit)
