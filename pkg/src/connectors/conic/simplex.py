"""Dense revised simplex with Bland's rule.

Meant for small and medium problems and as an independent cross-check of
the HiGHS backend. The basis matrix is refactorized with a dense LU at
every pivot.
"""

import numpy as np
import scipy.linalg as la


class _Standard:
    """``min c.z  s.t.  M z = q, z >= 0`` derived from a LinearProgram."""

    def __init__(self, lp):
        A = lp.A.toarray()
        m, n = A.shape
        lb, ub = lp.lb, lp.ub
        cols = []  # (orig var, sign, kind) ; x_j = shift_j + sum sign*z
        shift = np.zeros(n)
        extra_rows = []
        for j in range(n):
            if np.isfinite(lb[j]):
                shift[j] = lb[j]
                cols.append((j, 1.0))
                if np.isfinite(ub[j]):
                    extra_rows.append((len(cols) - 1, ub[j] - lb[j]))
            elif np.isfinite(ub[j]):
                shift[j] = ub[j]
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        nz = len(cols)
        T = np.zeros((n, nz))
        for k, (j, s) in enumerate(cols):
            T[j, k] = s
        rows = A @ T
        rhs = lp.b - A @ shift
        n_slack = sum(1 for s in lp.sense if s != "=") + len(extra_rows)
        M = np.zeros((m + len(extra_rows), nz + n_slack))
        M[:m, :nz] = rows
        q = np.zeros(m + len(extra_rows))
        q[:m] = rhs
        k = nz
        for i, s in enumerate(lp.sense):
            if s == ">=":
                M[i, k] = -1.0
                k += 1
            elif s == "<=":
                M[i, k] = 1.0
                k += 1
        for r, (col, width) in enumerate(extra_rows):
            M[m + r, col] = 1.0
            M[m + r, k] = 1.0
            q[m + r] = width
            k += 1
        self.flip = np.where(q < 0, -1.0, 1.0)
        self.M = M * self.flip[:, None]
        self.q = q * self.flip
        self.cz = np.concatenate([T.T @ lp.c, np.zeros(n_slack)])
        self.T = T
        self.shift = shift
        self.m_orig = m
        self.nz = nz

    def x_of(self, z):
        return self.shift + self.T @ z[: self.nz]


def _pivot_loop(M, q, cost, basis, max_iter, tol):
    m, ncol = M.shape
    for it in range(max_iter):
        B = M[:, basis]
        lu = la.lu_factor(B)
        zB = la.lu_solve(lu, q)
        y = la.lu_solve(lu, cost[basis], trans=1)
        red = cost - M.T @ y
        red[basis] = 0.0
        cand = np.flatnonzero(red < -tol)
        if cand.size == 0:
            return "optimal", basis, zB, y, it
        e = cand[0]
        d = la.lu_solve(lu, M[:, e])
        pos = d > tol
        if not np.any(pos):
            return "unbounded", basis, zB, (e, d), it
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(zB[pos], 0.0) / d[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + tol * max(1.0, abs(rmin)))
        leave = ties[np.argmin(np.asarray(basis)[ties])]
        basis = list(basis)
        basis[leave] = e
    return "stalled", basis, None, None, max_iter


def _independent_rows(M, q, tol=1e-10):
    """Drop linearly dependent equality rows; None when they are inconsistent."""
    if M.shape[0] == 0:
        return M, q, np.arange(0)
    _, R, piv = la.qr(M.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(1.0, diag.max(initial=0.0))))
    rows = np.sort(piv[:rank])
    res = la.lstsq(M[rows].T, M.T)[0] if rank else np.zeros((0, M.shape[0]))
    if rank < M.shape[0] and np.abs(res.T @ q[rows] - q).max() > 1e-8 * max(1.0, np.abs(q).max()):
        return None
    return M[rows], q[rows], rows


def simplex_solve(lp, tol=1e-9, max_iter=50000):
    """Two-phase revised simplex. Returns (status, x, y) in the LP's own sign conventions."""
    st = _Standard(lp)
    red = _independent_rows(st.M, st.q)
    if red is None:
        return "infeasible", None, None
    M, q, rows = red
    m, ncol = M.shape
    # phase 1: artificials on every row
    Mp = np.hstack([M, np.eye(m)])
    cost1 = np.concatenate([np.zeros(ncol), np.ones(m)])
    basis = list(range(ncol, ncol + m))
    status, basis, zB, _, _ = _pivot_loop(Mp, q, cost1, basis, max_iter, tol)
    if status == "stalled":
        return "stalled", None, None
    if zB @ cost1[basis] > 1e-7 * max(1.0, np.abs(q).max(initial=0.0)):
        return "infeasible", None, None
    # rows are independent, so zero-level artificials can always be pivoted out
    for pos in range(m):
        if basis[pos] < ncol:
            continue
        e = np.zeros(m)
        e[pos] = 1.0
        row = la.solve(Mp[:, basis].T, e) @ M
        free = [j for j in np.flatnonzero(np.abs(row) > 1e-9) if j not in basis]
        basis[pos] = free[0]
    status, basis, zB, yB, _ = _pivot_loop(M, q, st.cz, basis, max_iter, tol)
    if status != "optimal":
        return status, None, None
    z = np.zeros(ncol)
    z[basis] = zB
    ystd = np.zeros(st.M.shape[0])
    ystd[rows] = yB
    ystd *= st.flip
    return "optimal", st.x_of(z), ystd[: st.m_orig]
