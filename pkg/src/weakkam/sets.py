"""Mather, Aubry and Mane sets of a one-dimensional model, and structural checks.

Mather sets come from the closed-measure linear program. Aubry and Mane
sets are tested on the energy shell ``E(x, v) = alpha(c)`` over an x-grid:
candidate orbits are integrated backward and forward and their action over
symmetric windows is compared with potential tables built from a
short-time action kernel (see :mod:`weakkam.kernel`). The Aubry set is
additionally screened by the Peierls barrier ``h(x, x)``.

All membership tests are vectorized over the grid; reports are plain
dicts so they serialize to JSON directly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .action import peierls_barrier
from .duality import LPGrid, mather_measure_lp
from .dynamics import _rk4_step
from .errors import BadInput
from .kernel import critical_tables, interp2_periodic
from .lagrangian import OneForm, ReversedLagrangian, ShiftedLagrangian
from .torus import minimal_image, torus_grid, wrap

SET_GRID = 64
KERNEL_GRID = 256
KERNEL_TAU = 0.125
WINDOWS = (1.0, 2.0, 4.0)
SEMI_STATIC_RTOL = 1e-2
AUBRY_THRESHOLD = 1e-3
MATHER_WEIGHT = 1e-4
ORBIT_DT = 1e-3
LABELS = ("mather", "aubry", "mane")


@dataclass
class PhasePointSet:
    """Finite sample of an invariant set in the tangent bundle.

    ``tol`` holds the detection tolerances: ``x`` (base grid step), ``v``
    (velocity resolution) and any thresholds used by the membership test.
    """
    x: np.ndarray
    v: np.ndarray
    label: str
    c: np.ndarray
    energy: np.ndarray
    tol: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.x)

    def projection(self):
        """Sorted distinct base points (d = 1), merged within half a grid step."""
        if len(self) == 0:
            return np.zeros(0)
        xs = np.sort(wrap(self.x[:, 0]))
        step = self.tol.get("x", 0.0)
        keep = np.concatenate([[True], np.diff(xs) > 0.5 * step])
        return xs[keep]

    def to_rows(self):
        d = self.x.shape[1]
        head = [f"x{i}" for i in range(d)] + [f"v{i}" for i in range(d)] + ["E", "label"] + \
            [f"c{i}" for i in range(d)]
        rows = []
        for x, v, e in zip(self.x, self.v, self.energy):
            rows.append([*x, *v, e, self.label, *self.c])
        return head, rows

    def to_csv(self, path, digits=12):
        head, rows = self.to_rows()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for r in rows:
                w.writerow([f"{a:.{digits}g}" if isinstance(a, (float, np.floating)) else a for a in r])

    def to_dict(self):
        return {"label": self.label, "c": self.c.tolist(), "x": self.x.tolist(), "v": self.v.tolist(),
                "energy": self.energy.tolist(), "tol": self.tol}


def _cvec(c, dim):
    c = np.atleast_1d(np.asarray(c, float))
    if c.shape != (dim,):
        raise BadInput(f"cohomology class must have {dim} components")
    return c


def _one_dim(model):
    if model.dim != 1:
        raise BadInput("Aubry and Mane sets are implemented for one-dimensional models")


# Mather ------------------------------------------------------------------------


def mather_grid(dim):
    """LP grid for set extraction: fine velocities, full closedness order in d = 1."""
    if dim == 1:
        return LPGrid(64, 257, 4.0, 32)
    return LPGrid.default(dim)


def mather_set(model, c, grid=None, weight_tol=MATHER_WEIGHT, solver="simplex"):
    """Support of the minimizing closed measure at class ``c``.

    Atoms lighter than ``weight_tol`` are dropped. Each base point carries
    the velocity barycentre of the grid atoms above it.
    """
    c = _cvec(c, model.dim)
    grid = mather_grid(model.dim) if grid is None else grid
    res = mather_measure_lp(model, OneForm(c), grid, solver=solver)
    m = res.measure
    keep = m.w > weight_tol
    x, v = m.x[keep], m.v[keep]
    dv = 2 * grid.vmax / (grid.nv - 1)
    return PhasePointSet(x, v, "mather", c, model.energy(x, v),
                         tol={"x": 1.0 / grid.nx, "v": 0.5 * dv, "weight": weight_tol},
                         info={"weights": m.w[keep].tolist(), "lp_value": res.value,
                               "box_active": res.box_active})


# energy shell and window tests ------------------------------------------------------


def energy_shell(model, x, level, vmax=100.0):
    """Velocities with ``E(x, v) = level`` at each base point (d = 1).

    Energy is convex in ``v`` with its minimum at ``v = 0``, so there are
    two roots above that minimum, one on it and none below.
    Returns a list of arrays.
    """
    out = []
    for xi in np.atleast_1d(np.asarray(x, float)):
        X = np.array([xi])

        def g(v):
            return float(model.energy(X, np.array([v]))) - level

        g0 = g(0.0)
        scale = 1e-9 * (1.0 + abs(level))
        if g0 > scale:
            out.append(np.zeros(0))
            continue
        if g0 >= -scale:
            out.append(np.zeros(1))
            continue
        roots = []
        for sgn in (1.0, -1.0):
            hi = 1.0
            while g(sgn * hi) < 0:
                hi *= 2
                if hi > vmax:
                    raise BadInput("energy shell not reached within the velocity bound")
            r = brentq(lambda s: g(sgn * s), 0.0, hi, xtol=1e-14, rtol=1e-14)
            roots.append(sgn * r)
        out.append(np.array(sorted(roots)))
    return out


def _cumtrapz(y, dt):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]), axis=0)
    return out


def _shell_orbits(model, x, v, level, t_end, dt):
    """RK4 orbits with each step projected back onto ``E = level`` (d = 1).

    The projection moves ``|v|`` along its own sign by one Newton step on
    the energy and never by more than half of ``|v|``, so orbits on a
    separatrix cannot be pushed across the saddle they converge to.
    """
    n = int(round(t_end / dt))
    X = np.empty((n + 1,) + x.shape)
    V = np.empty((n + 1,) + v.shape)
    X[0], V[0] = x, v
    for i in range(1, n + 1):
        xi, vi = _rk4_step(model, X[i - 1], V[i - 1], dt)
        err = model.energy(xi, vi) - level
        ev = vi[:, 0] * model.L_vv(xi, vi)[:, 0, 0]
        step = np.where(np.abs(ev) > 0, err / np.where(ev == 0, 1.0, ev), 0.0)
        step = np.clip(step, -0.5 * np.abs(vi[:, 0]), 0.5 * np.abs(vi[:, 0]))
        vi = vi - step[:, None]
        X[i], V[i] = xi, vi
    return X, V


def window_defects(model, form, k, x, v, phi, windows=WINDOWS, dt=ORBIT_DT):
    """Semi-static and static defects of orbits through ``(x, v)``.

    For each window length ``w`` the orbit segment over ``[-w/2, w/2]`` has
    ``L_eta + k`` action ``A``. The semi-static defect is
    ``A - Phi(gamma(-w/2), gamma(w/2))`` and the static defect is
    ``A + Phi(gamma(w/2), gamma(-w/2))``; ``phi`` is a periodic potential
    table evaluated by bilinear interpolation. Orbits are kept on their
    initial energy level.

    Returns
    -------
    semi, static, phi_fwd, phi_back : ndarray, shape (n_points, n_windows)
    """
    x = np.asarray(x, float).reshape(-1, 1)
    v = np.asarray(v, float).reshape(-1, 1)
    smax = max(windows) / 2
    level = model.energy(x, v)
    Xf, Vf = _shell_orbits(model, x, v, level, smax, dt)
    Xb, Vb = _shell_orbits(ReversedLagrangian(model), x, -v, level, smax, dt)
    Af = _cumtrapz(model.L(Xf, Vf) + k, dt)
    Ab = _cumtrapz(model.L(Xb, -Vb) + k, dt)
    semi, static, pf, pb = [], [], [], []
    for w in windows:
        i = int(round(w / 2 / dt))
        a, b = Xb[i], Xf[i]
        A = Af[i] + Ab[i] - form.line_integral(a, b)
        fwd = interp2_periodic(phi, a[:, 0], b[:, 0])
        back = interp2_periodic(phi, b[:, 0], a[:, 0])
        semi.append(A - fwd)
        static.append(A + back)
        pf.append(fwd)
        pb.append(back)
    return tuple(np.stack(z, axis=1) for z in (semi, static, pf, pb))


def kernel_tables(model, c, n=KERNEL_GRID, tau=KERNEL_TAU, cache=True):
    """Critical potential and barrier tables at class ``c`` (cached kernel)."""
    _one_dim(model)
    return critical_tables(model, OneForm(_cvec(c, 1)), n=n, tau=tau, cache=cache)


def _candidates(model, xs, alpha_c):
    shell = energy_shell(model, xs, alpha_c)
    X = np.concatenate([np.full(len(s), x) for x, s in zip(xs, shell)])
    V = np.concatenate(shell) if shell else np.zeros(0)
    return X, V


def mane_set(model, c, alpha_c, nx=SET_GRID, windows=WINDOWS, rtol=SEMI_STATIC_RTOL, tables=None):
    """Energy-shell points whose orbits are semi-static over every window.

    Parameters
    ----------
    alpha_c : float
        Critical value at ``c``; fixes the energy shell.
    nx : int
        Base grid ``i / nx``.
    tables : CriticalTables, optional
        Precomputed :func:`kernel_tables` for the same ``c``.
    """
    _one_dim(model)
    c = _cvec(c, 1)
    form = OneForm(c)
    tables = kernel_tables(model, c) if tables is None else tables
    xs = torus_grid(nx, 1)[:, 0]
    X, V = _candidates(model, xs, alpha_c)
    tol = {"x": 1.0 / nx, "v": 0.0, "rtol": rtol, "windows": list(windows),
           "alpha_kernel": tables.alpha, "energy": 2 * abs(alpha_c - tables.alpha) + 1e-9}
    if len(X) == 0:
        return PhasePointSet(np.zeros((0, 1)), np.zeros((0, 1)), "mane", c, np.zeros(0), tol)
    semi, _, pf, _ = window_defects(model, form, tables.alpha, X, V, tables.phi, windows)
    ok = np.all(semi <= rtol * (1.0 + np.abs(pf)), axis=1)
    Xa, Va = X[ok, None], V[ok, None]
    return PhasePointSet(Xa, Va, "mane", c, model.energy(Xa, Va), tol,
                         info={"defect": np.max(semi[ok], axis=1).tolist() if ok.any() else [],
                               "rejected": int((~ok).sum())})


def aubry_set(model, c, alpha_c, nx=SET_GRID, threshold=AUBRY_THRESHOLD, method="kernel",
              windows=WINDOWS, rtol=SEMI_STATIC_RTOL, tables=None, **barrier_opts):
    """Base points with ``h(x, x) <= threshold``, lifted by the static test.

    ``method="kernel"`` reads ``h(x, x)`` from the barrier table;
    ``method="ladder"`` calls :func:`weakkam.action.peierls_barrier` at every
    grid point (slow; meant for spot checks). Each accepted ``x`` keeps the
    shell velocities that pass the static test; if none does, the one with
    the smallest static defect is kept and flagged.

    Raises
    ------
    NotStabilized
        Propagated from the barrier ladder.
    """
    _one_dim(model)
    c = _cvec(c, 1)
    form = OneForm(c)
    tables = kernel_tables(model, c) if tables is None else tables
    n = len(tables.phi)
    if n % nx:
        raise BadInput(f"set grid {nx} must divide the kernel grid {n}")
    xs = torus_grid(nx, 1)[:, 0]
    if method == "kernel":
        h = np.diag(tables.barrier)[:: n // nx]
    elif method == "ladder":
        h = np.array([float(peierls_barrier(model, form, alpha_c, [x], [x], **barrier_opts)) for x in xs])
    else:
        raise BadInput(f"unknown barrier method {method!r}")
    inside = xs[h <= threshold]
    tol = {"x": 1.0 / nx, "v": 0.0, "threshold": threshold, "rtol": rtol, "method": method,
           "alpha_kernel": tables.alpha}
    X, V = _candidates(model, inside, alpha_c)
    if len(X) == 0:
        return PhasePointSet(np.zeros((0, 1)), np.zeros((0, 1)), "aubry", c, np.zeros(0), tol,
                             info={"barrier": h.tolist()})
    _, static, _, pb = window_defects(model, form, tables.alpha, X, V, tables.phi, windows)
    score = np.max(static - rtol * (1.0 + np.abs(pb)), axis=1)
    keep = np.zeros(len(X), bool)
    flagged = []
    for x in inside:
        idx = np.nonzero(X == x)[0]
        if len(idx) == 0:
            continue
        good = idx[score[idx] <= 0]
        if len(good):
            keep[good] = True
        else:
            keep[idx[np.argmin(score[idx])]] = True
            flagged.append(float(x))
    Xa, Va = X[keep, None], V[keep, None]
    return PhasePointSet(Xa, Va, "aubry", c, model.energy(Xa, Va), tol,
                         info={"barrier": h.tolist(), "static_failed": flagged})


# structural checks ------------------------------------------------------------------


def _dist(a, b):
    """Phase-space distances between point sets ``a`` and ``b`` (torus metric on x)."""
    dx = minimal_image(a.x[:, None, :] - b.x[None, :, :])
    dv = a.v[:, None, :] - b.v[None, :, :]
    return np.sqrt(np.sum(dx ** 2, axis=-1) + np.sum(dv ** 2, axis=-1))


def directed_hausdorff(a, b):
    """``max_{p in a} min_{q in b} |p - q|``; 0 for empty ``a``, inf for empty ``b`` only."""
    if len(a) == 0:
        return 0.0
    if len(b) == 0:
        return float("inf")
    return float(np.max(np.min(_dist(a, b), axis=1)))


def hausdorff(a, b):
    return max(directed_hausdorff(a, b), directed_hausdorff(b, a))


def combined_tolerance(a, b):
    return float(np.hypot(a.tol.get("x", 0.0) + b.tol.get("x", 0.0),
                          a.tol.get("v", 0.0) + b.tol.get("v", 0.0)))


def check_inclusions(mather, aubry, mane, alpha_c, energy_tol=None):
    """Mather in Aubry in Mane in the energy level, within combined tolerances.

    The reverse distances are reported too; a large reverse distance shows
    that an inclusion is strict.
    """
    sets = (mather, aubry, mane)
    if len({tuple(s.c) for s in sets}) != 1:
        raise BadInput("sets must share one cohomology class")
    e_tol = mane.tol.get("energy", 1e-9) if energy_tol is None else energy_tol
    e_err = float(np.max(np.abs(mane.energy - alpha_c))) if len(mane) else 0.0
    rep = {"c": list(mather.c), "alpha": alpha_c}
    for name, a, b in (("mather_in_aubry", mather, aubry), ("aubry_in_mane", aubry, mane)):
        d = directed_hausdorff(a, b)
        t = combined_tolerance(a, b)
        rep[name] = {"distance": d, "tolerance": t, "pass": bool(d <= t),
                     "reverse_distance": directed_hausdorff(b, a)}
    rep["mane_in_energy_level"] = {"distance": e_err, "tolerance": e_tol, "pass": bool(e_err <= e_tol)}
    rep["pass"] = all(rep[k]["pass"] for k in ("mather_in_aubry", "aubry_in_mane", "mane_in_energy_level"))
    return rep


def check_graph_property(pset, v_tol=None):
    """Does the sample project injectively to the base?

    Points in the same grid column (base distance below half a step) whose
    velocities differ by more than ``v_tol`` violate the property. For a
    graph the Lipschitz constant of ``x -> v`` is fitted over neighbouring
    columns.
    """
    step = pset.tol.get("x", 0.0)
    v_tol = max(2 * pset.tol.get("v", 0.0), 1e-6) if v_tol is None else v_tol
    n = len(pset)
    if n <= 1:
        return {"pass": True, "lipschitz": 0.0, "violation": None, "n": n}
    dx = np.abs(minimal_image(pset.x[:, None, 0] - pset.x[None, :, 0]))
    dv = np.abs(pset.v[:, None, 0] - pset.v[None, :, 0])
    same = dx < 0.5 * step if step > 0 else dx == 0
    bad = same & (dv > v_tol)
    if np.any(bad):
        i, j = map(int, np.argwhere(bad)[0])
        return {"pass": False, "lipschitz": float("inf"), "n": n,
                "violation": {"x": [float(pset.x[i, 0]), float(pset.x[j, 0])],
                              "v": [float(pset.v[i, 0]), float(pset.v[j, 0])]},
                "violating_columns": int(np.unique(pset.x[np.any(bad, axis=1), 0]).size)}
    near = (~same) & (dx <= 1.5 * step) if step > 0 else ~same
    lip = float(np.max(np.where(near, dv / np.where(dx > 0, dx, 1.0), 0.0)))
    return {"pass": True, "lipschitz": lip, "violation": None, "n": n}


def check_connectivity(pset, nx=None):
    """Projected grid points form one wrap-around interval or the whole circle."""
    step = pset.tol.get("x", 1.0 / SET_GRID)
    nx = int(round(1.0 / step)) if nx is None else nx
    idx = np.unique(np.round(wrap(pset.x[:, 0]) * nx).astype(int) % nx)
    if len(idx) in (0, nx):
        return {"pass": len(idx) == nx or len(idx) == 0, "components": int(len(idx) > 0), "covered": len(idx)}
    occ = np.zeros(nx, bool)
    occ[idx] = True
    starts = int(np.sum(occ & ~np.roll(occ, 1)))
    return {"pass": starts == 1, "components": starts, "covered": int(len(idx))}


def check_fiber_translation_equivariance(model, base_c, eta, grid=None, tol=None):
    """Compare Mather sets before and after a fiber translation.

    The model shifted by the closed form ``eta`` is solved at ``base_c``;
    the original at ``base_c + [eta]``, whose points are mapped to the
    momenta ``p - eta(x)``. Distances are measured in ``(x, p)``.
    """
    base_c = _cvec(base_c, model.dim)
    shifted = ShiftedLagrangian(model, eta)
    a = mather_set(shifted, base_c, grid)
    b = mather_set(model, base_c + eta.c, grid)
    pa = shifted.L_v(a.x, a.v)
    pb = model.L_v(b.x, b.v) - eta.eval(b.x)
    A = PhasePointSet(a.x, pa, "mather", base_c, a.energy, a.tol)
    B = PhasePointSet(b.x, pb, "mather", base_c, b.energy, b.tol)
    d = hausdorff(A, B)
    t = combined_tolerance(A, B) if tol is None else tol
    return {"distance": d, "tolerance": t, "pass": bool(d <= t), "n_shifted": len(a), "n_original": len(b)}


def write_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
