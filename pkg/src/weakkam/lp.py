"""Dense revised primal simplex with a Bland's-rule safeguard.

Solves ``min c.x  s.t.  A x = b, x >= 0`` for the small-row, many-column
programs produced by the closed-measure discretization. The basis
inverse is refactorized every iteration, which is cheap when the row
count is small and keeps the iteration free of accumulated round-off.
Pricing is Dantzig's (most negative reduced cost). After a run of
degenerate pivots the iteration switches to Bland's rule (smallest
eligible index enters and leaves) until the objective moves again, which
rules out cycling on the highly degenerate closedness constraints. Both
rules are deterministic, so the pivot sequence is reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LPInfeasible, NoConvergence

TOL = 1e-9
FEAS_TOL = 1e-9
PERTURB = 1e-7


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    iterations: int
    basis: np.ndarray
    duals: np.ndarray


def _iterate(A, b, c, basis, tol, max_iter, bland_after=50):
    m, n = A.shape
    it = 0
    degenerate = 0
    while True:
        B = A[:, basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular basis") from exc
        xB = Binv @ b
        y = c[basis] @ Binv
        red = c - y @ A
        red[basis] = 0.0
        cand = np.nonzero(red < -tol)[0]
        if len(cand) == 0:
            return basis, xB, y, it
        bland = degenerate >= bland_after
        j = cand[0] if bland else cand[np.argmin(red[cand])]
        d = Binv @ A[:, j]
        pos = d > tol
        if not np.any(pos):
            raise NoConvergence("unbounded program")
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(xB[pos], 0.0) / d[pos]
        rmin = ratios.min()
        ties = np.nonzero(ratios <= rmin + tol * max(1.0, rmin))[0]
        if bland:
            leave = ties[np.argmin(basis[ties])]
        else:
            leave = ties[np.argmax(d[ties])]
        degenerate = degenerate + 1 if rmin <= tol else 0
        basis = basis.copy()
        basis[leave] = j
        it += 1
        if it >= max_iter:
            raise NoConvergence(f"simplex hit {max_iter} iterations")


def simplex(c, A_eq, b_eq, tol=TOL, max_iter=200000, start=None):
    """Two-phase primal simplex.

    Parameters
    ----------
    c : array_like, shape (n,)
    A_eq : array_like, shape (m, n)
    b_eq : array_like, shape (m,)
    start : array_like of int, optional
        Columns of a known feasible point (a crash basis); phase one then
        only has to swap zero-level artificials out.

    Returns
    -------
    LPResult

    Raises
    ------
    LPInfeasible
        Phase one ends with a positive artificial sum.
    NoConvergence
        Unbounded program or iteration cap.
    """
    A = np.array(A_eq, float)
    b = np.array(b_eq, float)
    c = np.asarray(c, float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = np.arange(n, n + m)
    it1 = 0
    if start is not None:
        basis = _crash(A1, b, np.asarray(start, int), basis, tol)
    if start is None or basis is None:
        basis = np.arange(n, n + m)
        basis, xB, _, it1 = _iterate(A1, b, c1, basis, tol, max_iter)
    else:
        xB = np.linalg.solve(A1[:, basis], b)
    infeas = float(c1[basis] @ xB)
    if infeas > tol * max(1.0, np.abs(b).max()):
        raise LPInfeasible(f"phase one residual {infeas:.3e}")
    # drive remaining artificials out of the basis where possible
    Binv = np.linalg.inv(A1[:, basis])
    keep_rows = np.ones(m, bool)
    for r in range(m):
        if basis[r] < n:
            continue
        row = np.abs(Binv[r] @ A)
        row[basis[basis < n]] = 0.0
        j = int(np.argmax(row))
        if row[j] > 1e-7 * max(1.0, row.max()):
            basis[r] = j
            Binv = np.linalg.inv(A1[:, basis])
        else:
            keep_rows[r] = False   # redundant constraint
    A2 = A[keep_rows]
    b2 = b[keep_rows]
    basis = basis[keep_rows]
    # phase two on a perturbed right-hand side: every basic variable gets a
    # distinct small positive shift, so pivots are nondegenerate
    m2 = len(b2)
    eps = PERTURB * max(1.0, np.abs(b2).max()) * (1.0 + np.arange(m2) / m2)
    bp = b2 + A2[:, basis] @ eps
    basis, _, _, it2 = _iterate(A2, bp, c, basis, tol, max_iter)
    xB = np.linalg.solve(A2[:, basis], b2)
    if np.any(xB < -FEAS_TOL):
        # perturbation changed the optimal basis; finish on the exact data
        basis, xB, y, it3 = _iterate(A2, b2, c, _restore(A2, b2, basis, tol, max_iter), tol, max_iter)
        it2 += it3
    y = c[basis] @ np.linalg.inv(A2[:, basis])
    x = np.zeros(n)
    x[basis] = np.maximum(xB, 0.0)
    duals = np.zeros(m)
    duals[np.nonzero(keep_rows)[0]] = y
    duals[neg] *= -1
    return LPResult(x, float(c @ x), it1 + it2, basis, duals)


def _crash(A1, b, cols, basis, tol):
    """Put feasible columns into an artificial basis; ``None`` if that fails."""
    m = len(b)
    basis = basis.copy()
    for j in cols:
        B = A1[:, basis]
        d = np.linalg.solve(B, A1[:, j])
        # replace an artificial with a nonzero pivot, preferring the largest
        art = [r for r in range(m) if basis[r] >= A1.shape[1] - m and abs(d[r]) > 1e-9]
        if not art:
            return None
        r = max(art, key=lambda i: abs(d[i]))
        basis[r] = j
    xB = np.linalg.solve(A1[:, basis], b)
    if np.any(xB < -tol):
        return None
    return basis


def _restore(A, b, basis, tol, max_iter):
    """Feasible basis for ``A x = b`` via a phase one started near ``basis``."""
    m, n = A.shape
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    start = np.arange(n, n + m)
    crashed = _crash(A1, b, [j for j in basis], start, tol)
    if crashed is None:
        crashed, _, _, _ = _iterate(A1, b, c1, start, tol, max_iter)
    else:
        crashed, _, _, _ = _iterate(A1, b, c1, crashed, tol, max_iter)
    if np.any(crashed >= n):
        raise NoConvergence("could not restore a feasible basis after perturbation")
    return crashed
