"""Native primal-dual interior-point method for small dense SDPs.

Problem form (equalities already eliminated)::

    minimize c.x   s.t.   S_k = F0_k + F_k x  in cone_k

where every cone is either a PSD cone (matrix blocks) or a nonnegative
orthant (vectors). Search directions use Nesterov-Todd scaling; the centering
parameter follows a predictor step as in Mehrotra's heuristic.
"""

import numpy as np
import scipy.linalg as la


def _sqrtm_psd(M):
    w, V = np.linalg.eigh((M + M.T) / 2)
    return (V * np.sqrt(np.maximum(w, 0.0))) @ V.T


def _nt_scaling(S, Z):
    """W with W S W = Z."""
    Sh = _sqrtm_psd(S)
    w, V = np.linalg.eigh(Sh @ Z @ Sh)
    mid = (V * np.sqrt(np.maximum(w, 1e-300))) @ V.T
    Shi = np.linalg.inv(Sh)
    W = Shi @ mid @ Shi
    return (W + W.T) / 2


def _max_step(S, dS, psd):
    """Largest alpha in (0, 1] keeping S + alpha dS inside the cone."""
    if psd:
        L = np.linalg.cholesky(S)
        Li = la.solve_triangular(L, np.eye(S.shape[0]), lower=True)
        ev = np.linalg.eigvalsh(Li @ dS @ Li.T)
        lo = ev[0]
    else:
        ratio = dS / S
        lo = ratio.min(initial=0.0)
    if lo >= 0:
        return 1.0
    return min(1.0, -1.0 / lo)


class _Cone:
    def __init__(self, F0, F, psd):
        self.F0 = F0
        self.F = F  # dense (size, n)
        self.psd = psd
        self.d = F0.shape[0]
        self.nu = self.d

    def slack(self, x):
        v = self.F0.ravel() + self.F @ x
        return v.reshape(self.F0.shape)


def ipm_solve(c, cones, tol=1e-8, max_iter=120):
    """Returns (status, x, Zs, info) with status in {optimal, stalled}."""
    n = c.size
    nu = sum(k.nu for k in cones)
    x = np.zeros(n)
    S = [np.eye(k.d) if k.psd else np.ones(k.d) for k in cones]
    Z = [np.eye(k.d) if k.psd else np.ones(k.d) for k in cones]
    # start well inside: scale to the data
    scale = 1.0 + max([np.abs(k.F0).max(initial=0.0) for k in cones] + [0.0])
    S = [s * scale for s in S]
    Z = [z * (1.0 + np.abs(c).max(initial=0.0)) for z in Z]
    cnorm = 1.0 + np.linalg.norm(c)
    bnorm = 1.0 + max([np.linalg.norm(k.F0) for k in cones] + [0.0])
    info = {}
    for it in range(max_iter):
        rp = [k.slack(x) - s for k, s in zip(cones, S)]
        rd = c - sum(k.F.T @ z.ravel() for k, z in zip(cones, Z))
        gap = sum(float(np.vdot(s, z)) for s, z in zip(S, Z))
        mu = gap / nu
        pobj = float(c @ x)
        dobj = -sum(float(np.vdot(k.F0, z)) for k, z in zip(cones, Z))
        pres = max([np.linalg.norm(r) for r in rp] + [0.0]) / bnorm
        dres = np.linalg.norm(rd) / cnorm
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        info = {"iterations": it, "pres": pres, "dres": dres, "gap": relgap}
        if pres < tol and dres < tol and relgap < tol:
            return "optimal", x, Z, info
        if not np.isfinite(mu) or np.linalg.norm(x) > 1e12 or max(np.abs(z).max() for z in Z) > 1e12:
            return "stalled", x, Z, info
        Ws = []
        M = np.zeros((n, n))
        for k, s, z in zip(cones, S, Z):
            if k.psd:
                W = _nt_scaling(s, z)
                d = k.d
                Fk = k.F.reshape(d, d, n)
                WF = np.einsum("ij,jkn,kl->iln", W, Fk, W).reshape(d * d, n)
            else:
                W = z / s
                WF = W[:, None] * k.F
            Ws.append(W)
            M += k.F.T @ WF
        M = (M + M.T) / 2
        try:
            cho = la.cho_factor(M + 1e-14 * np.trace(M) / max(n, 1) * np.eye(n))
            solve = lambda rhs: la.cho_solve(cho, rhs)
        except la.LinAlgError:
            Mi = np.linalg.pinv(M)
            solve = lambda rhs: Mi @ rhs

        def direction(sig):
            rhs = -rd
            Rcs = []
            for k, s, z, W, r in zip(cones, S, Z, Ws, rp):
                if k.psd:
                    Rc = sig * mu * np.linalg.inv(s) - z
                    Rc = (Rc + Rc.T) / 2
                    rhs = rhs + k.F.T @ (Rc - W @ r @ W).ravel()
                else:
                    Rc = sig * mu / s - z
                    rhs = rhs + k.F.T @ (Rc - W * r)
                Rcs.append(Rc)
            dx = solve(rhs)
            dS, dZ = [], []
            for k, W, r, Rc in zip(cones, Ws, rp, Rcs):
                ds = (k.F @ dx).reshape(k.F0.shape) + r
                if k.psd:
                    ds = (ds + ds.T) / 2
                    dz = Rc - W @ ds @ W
                    dz = (dz + dz.T) / 2
                else:
                    dz = Rc - W * ds
                dS.append(ds)
                dZ.append(dz)
            return dx, dS, dZ

        def steps(dS, dZ):
            ap = min([_max_step(s, d, k.psd) for k, s, d in zip(cones, S, dS)] + [1.0])
            ad = min([_max_step(z, d, k.psd) for k, z, d in zip(cones, Z, dZ)] + [1.0])
            return ap, ad

        dx, dS, dZ = direction(0.0)
        ap, ad = steps(dS, dZ)
        mu_aff = sum(float(np.vdot(s + ap * a, z + ad * b)) for s, a, z, b in zip(S, dS, Z, dZ)) / nu
        sig = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        dx, dS, dZ = direction(sig)
        ap, ad = steps(dS, dZ)
        ap, ad = min(1.0, 0.95 * ap), min(1.0, 0.95 * ad)
        x = x + ap * dx
        S = [s + ap * d for s, d in zip(S, dS)]
        Z = [z + ad * d for z, d in zip(Z, dZ)]
    return "stalled", x, Z, info
