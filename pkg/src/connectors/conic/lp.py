"""LP solving behind one interface, with dual and Farkas certificates.

Sign conventions for a minimization: the multiplier ``y_i`` of a ``>=`` row is
nonnegative, of a ``<=`` row nonpositive, of an ``=`` row free. Bound
multipliers ``r`` satisfy ``c = A^T y + r``; ``r_j > 0`` needs a finite lower
bound and ``r_j < 0`` a finite upper bound.
"""

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .problems import Certificate, LinearProgram, SolveResult
from .simplex import simplex_solve


def _split(p):
    ge, le, eq = p.row_mask(">="), p.row_mask("<="), p.row_mask("=")
    A_ub = sp.vstack([-p.A[ge], p.A[le]]).tocsr()
    b_ub = np.concatenate([-p.b[ge], p.b[le]])
    return ge, le, eq, A_ub, b_ub


def _bounds(p):
    return [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u) for l, u in zip(p.lb, p.ub)]


def _highs(p, tol):
    ge, le, eq, A_ub, b_ub = _split(p)
    opts = {"primal_feasibility_tolerance": min(tol, 1e-7), "dual_feasibility_tolerance": min(tol, 1e-7)}
    res = linprog(
        p.c,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=p.A[eq] if eq.any() else None,
        b_eq=p.b[eq] if eq.any() else None,
        bounds=_bounds(p),
        method="highs",
        options=opts,
    )
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "stalled")
    if status != "optimal":
        return status, None, None
    y = np.zeros(p.A.shape[0])
    mu = res.ineqlin.marginals if A_ub.shape[0] else np.zeros(0)
    n_ge = int(ge.sum())
    y[ge] = -mu[:n_ge]
    y[le] = mu[n_ge:]
    if eq.any():
        y[eq] = res.eqlin.marginals
    return status, np.asarray(res.x, dtype=float), y


def _bound_multipliers(p, y):
    r = p.c - p.A.T @ y
    return r


def lp_dual_value(p, y, r):
    val = float(p.b @ y)
    pos, neg = r > 0, r < 0
    with np.errstate(invalid="ignore"):
        val += float(np.sum(np.where(pos, p.lb * r, 0.0)))
        val += float(np.sum(np.where(neg, p.ub * r, 0.0)))
    return val


def farkas_lp(p):
    """Look for an infeasibility certificate (y, r): A^T y + r = 0 with positive dual value."""
    m, n = p.A.shape
    ge, le = p.row_mask(">="), p.row_mask("<=")
    ylb = np.where(ge, 0.0, -1.0)
    yub = np.where(le, 0.0, 1.0)
    fin_l, fin_u = np.isfinite(p.lb), np.isfinite(p.ub)
    # variables: y (m), rl (n) >= 0, ru (n) >= 0 ; r = rl - ru
    c = -np.concatenate([p.b, np.where(fin_l, p.lb, 0.0), -np.where(fin_u, p.ub, 0.0)])
    A_eq = sp.hstack([p.A.T, sp.eye(n), -sp.eye(n)]).tocsr()
    bounds = [(l, u) for l, u in zip(ylb, yub)]
    bounds += [(0.0, 1.0 if f else 0.0) for f in fin_l]
    bounds += [(0.0, 1.0 if f else 0.0) for f in fin_u]
    res = linprog(c, A_eq=A_eq, b_eq=np.zeros(n), bounds=bounds, method="highs")
    if res.status != 0 or -res.fun <= 1e-9:
        return None
    y = res.x[:m]
    r = res.x[m : m + n] - res.x[m + n :]
    return Certificate("lp-farkas", {"y": y, "r": r})


def ray_lp(p):
    """Look for an improving ray d (feasible direction with c.d < 0)."""
    ge, le, eq, A_ub, _ = _split(p)
    n = p.c.size
    lo = np.where(np.isfinite(p.lb), 0.0, -1.0)
    hi = np.where(np.isfinite(p.ub), 0.0, 1.0)
    res = linprog(
        p.c,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=np.zeros(A_ub.shape[0]) if A_ub.shape[0] else None,
        A_eq=p.A[eq] if eq.any() else None,
        b_eq=np.zeros(int(eq.sum())) if eq.any() else None,
        bounds=list(zip(lo, hi)),
        method="highs",
    )
    if res.status != 0 or res.fun >= -1e-9:
        return None
    return Certificate("lp-ray", {"d": np.asarray(res.x)})


def solve_lp(p: LinearProgram, tol=1e-8, backend="highs", certify=True):
    """Solve ``p``; returns a SolveResult that unpacks as ``(status, x, dual)``.

    ``dual`` holds row multipliers ``y`` and bound multipliers ``r``. With
    ``certify`` the result carries a certificate that ``verify_certificate``
    re-checks without any solver.
    """
    if backend == "highs":
        status, x, y = _highs(p, tol)
    elif backend == "simplex":
        status, x, y = simplex_solve(p, tol=min(tol, 1e-9))
    else:
        raise ValueError(f"unknown LP backend {backend!r}")
    cert = None
    if status == "optimal":
        r = _bound_multipliers(p, y)
        # clean bound multipliers for variables away from their bounds
        obj = float(p.c @ x)
        dual = {"y": y, "r": r}
        if certify:
            cert = Certificate("lp-dual", {"x": x, "y": y, "r": r}, tol=max(tol, 1e-7) * 10)
        return SolveResult("optimal", x, obj, dual, cert, backend)
    if status == "infeasible" and certify:
        cert = farkas_lp(p)
    elif status == "unbounded" and certify:
        cert = ray_lp(p)
    return SolveResult(status, None, None, {}, cert, backend)
