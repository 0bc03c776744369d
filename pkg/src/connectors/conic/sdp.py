"""SDP solving: Clarabel backend (default) and the native interior-point method."""

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .ipm import _Cone, ipm_solve
from .problems import Certificate, SemidefiniteProgram, SolveResult

MAX_BLOCK = 2000
_SQRT2 = np.sqrt(2.0)


def _svec_index(d):
    """Row-major flat indices of the upper triangle in column-major order, and their scaling."""
    rows, cols = [], []
    for j in range(d):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    rows, cols = np.array(rows), np.array(cols)
    scale = np.where(rows == cols, 1.0, _SQRT2)
    return rows * d + cols, scale, rows, cols


def _smat(v, d):
    idx, scale, r, c = _svec_index(d)
    Z = np.zeros((d, d))
    Z[r, c] = v / scale
    Z[c, r] = v / scale
    return Z


def _clarabel(p, tol, max_iter=300):
    import clarabel

    n = p.n
    mats, rhs, cones = [], [], []
    if p.A.shape[0]:
        mats.append(p.A)
        rhs.append(p.b)
        cones.append(clarabel.ZeroConeT(p.A.shape[0]))
    if p.G.shape[0]:
        mats.append(p.G)
        rhs.append(p.h)
        cones.append(clarabel.NonnegativeConeT(p.G.shape[0]))
    for blk in p.blocks:
        idx, scale, _, _ = _svec_index(blk.dim)
        mats.append(-sp.diags(scale) @ blk.F[idx])
        rhs.append(blk.F0.ravel()[idx] * scale)
        cones.append(clarabel.PSDTriangleConeT(blk.dim))
    A = sp.vstack(mats).tocsc() if mats else sp.csc_matrix((0, n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    st = clarabel.DefaultSettings()
    st.verbose = False
    st.max_iter = max_iter
    st.tol_gap_abs = tol
    st.tol_gap_rel = tol
    st.tol_feas = tol
    st.tol_infeas_abs = tol
    st.tol_infeas_rel = tol
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), np.asarray(p.c, float), A, b, cones, st)
    try:
        sol = solver.solve()
    except BaseException as exc:  # the backend panics on eigen-decomposition failures near the boundary
        if isinstance(exc, (KeyboardInterrupt, SystemExit)):
            raise
        if tol < 1e-7:
            return _clarabel(p, tol * 100, max_iter)
        return "stalled", np.zeros(n), [np.zeros((b.dim, b.dim)) for b in p.blocks], np.zeros(p.G.shape[0]), np.zeros(p.A.shape[0]), {"clarabel_status": repr(exc)}
    z = np.asarray(sol.z)
    x = np.asarray(sol.x)
    off = 0
    y = -z[off : off + p.A.shape[0]]
    off += p.A.shape[0]
    lam = z[off : off + p.G.shape[0]]
    off += p.G.shape[0]
    Zs = []
    for blk in p.blocks:
        k = blk.dim * (blk.dim + 1) // 2
        Zs.append(_smat(z[off : off + k], blk.dim))
        off += k
    name = str(sol.status).split(".")[-1]
    status = {
        "Solved": "optimal",
        "AlmostSolved": "optimal",
        "PrimalInfeasible": "infeasible",
        "AlmostPrimalInfeasible": "infeasible",
        "DualInfeasible": "unbounded",
        "AlmostDualInfeasible": "unbounded",
    }.get(name, "stalled")
    return status, x, Zs, lam, y, {"clarabel_status": name, "iterations": sol.iterations}


def _eliminate(p):
    """Parametrize {x : A x = b} as x0 + N u; None when inconsistent."""
    n = p.n
    if p.A.shape[0] == 0:
        return np.zeros(n), np.eye(n)
    A = p.A.toarray()
    x0, *_ = la.lstsq(A, p.b)
    if np.abs(A @ x0 - p.b).max() > 1e-9 * (1 + np.abs(p.b).max()):
        return None
    return x0, la.null_space(A)


def _native_cones(p, x0, N, t_col=False):
    cones = []
    for blk in p.blocks:
        F = blk.F.toarray() @ N
        F0 = blk.F0 + (blk.F @ x0).reshape(blk.dim, blk.dim)
        if t_col:
            F = np.hstack([F, np.eye(blk.dim).ravel()[:, None]])
        cones.append(_Cone(F0, F, True))
    if p.G.shape[0]:
        G = p.G.toarray()
        F = -G @ N
        F0 = p.h - G @ x0
        if t_col:
            F = np.hstack([F, np.ones((F.shape[0], 1))])
        cones.append(_Cone(F0, F, False))
    return cones


def _recover_duals(p, Zcones):
    Zs = list(Zcones[: len(p.blocks)])
    lam = Zcones[len(p.blocks)] if p.G.shape[0] else np.zeros(0)
    y = np.zeros(p.A.shape[0])
    if p.A.shape[0]:
        resid = p.c - p.adjoint(Zs, lam, None)
        y, *_ = la.lstsq(p.A.toarray().T, resid)
    return Zs, lam, y


def _native(p, tol):
    el = _eliminate(p)
    if el is None:
        A = p.A.toarray()
        yf = p.b - A @ la.lstsq(A, p.b)[0]
        Zs = [np.zeros((b.dim, b.dim)) for b in p.blocks]
        return "infeasible", None, Zs, np.zeros(p.G.shape[0]), yf, {}
    x0, N = el
    cones = _native_cones(p, x0, N)
    if not cones:
        u = np.zeros(N.shape[1])
        cu = N.T @ p.c
        if np.abs(cu).max(initial=0.0) > 1e-12:
            return "unbounded", None, [], np.zeros(0), np.zeros(p.A.shape[0]), {}
        return "optimal", x0, [], np.zeros(0), _recover_duals(p, [])[2], {}
    status, u, Zc, info = ipm_solve(N.T @ p.c, cones, tol=tol)
    x = x0 + N @ u
    if status == "optimal":
        Zs, lam, y = _recover_duals(p, Zc)
        return status, x, Zs, lam, y, info
    # phase 1: min t s.t. slack + t I in cone, t >= -1
    cones1 = _native_cones(p, x0, N, t_col=True)
    nvar = N.shape[1] + 1
    bound = np.zeros(nvar)
    bound[-1] = 1.0
    cones1.append(_Cone(np.array([1.0]), bound[None, :], False))
    c1 = bound.copy()
    st1, u1, Z1, info1 = ipm_solve(c1, cones1, tol=tol)
    if st1 == "optimal" and u1[-1] > 10 * tol:
        Zs, lam, _ = _recover_duals(p, Z1[:-1])
        resid = -p.adjoint(Zs, lam, None)
        y = np.zeros(p.A.shape[0])
        if p.A.shape[0]:
            y, *_ = la.lstsq(p.A.toarray().T, resid)
        return "infeasible", None, Zs, lam, y, info1
    return "stalled", x, Zc, np.zeros(0), np.zeros(0), info


def solve_sdp(p: SemidefiniteProgram, tol=1e-8, backend="clarabel", certify=True):
    """Solve ``p``; the SolveResult unpacks as ``(status, x, dual)`` with ``dual['Z']`` per block."""
    for blk in p.blocks:
        if blk.dim > MAX_BLOCK:
            raise ValueError(f"PSD block of size {blk.dim} exceeds the desk-scale guard {MAX_BLOCK}")
    if backend == "clarabel":
        status, x, Zs, lam, y, info = _clarabel(p, tol)
    elif backend == "native":
        status, x, Zs, lam, y, info = _native(p, tol)
    else:
        raise ValueError(f"unknown SDP backend {backend!r}")
    dual = {"Z": Zs, "lam": lam, "y": y}
    cert = None
    ctol = max(100 * tol, 1e-6)
    if status == "optimal":
        obj = float(p.c @ x)
        if certify:
            cert = Certificate("sdp-dual", {"x": x, "Z": Zs, "lam": lam, "y": y}, tol=ctol)
            from .certificate import verify_certificate

            if not verify_certificate(cert, p):
                # solver claimed optimality but the certificate does not hold
                info["unverified"] = verify_certificate(cert, p).residuals
                return SolveResult("stalled", x, obj, dual, cert, backend, info)
        return SolveResult("optimal", x, obj, dual, cert, backend, info)
    if status == "infeasible" and certify:
        cert = Certificate("sdp-farkas", {"Z": Zs, "lam": lam, "y": y}, tol=ctol)
    return SolveResult(status, x if status == "stalled" else None, None, dual, cert, backend, info)
