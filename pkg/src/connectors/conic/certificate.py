"""Re-verification of certificates by plain matrix arithmetic.

Each checker returns a :class:`Verification`. World modules register their own
certificate kinds (moment, decomposition, local-model, ...) through
``register_verifier`` so that one entry point audits everything.
"""

from dataclasses import dataclass, field

import numpy as np

from .problems import Certificate, LinearProgram, SemidefiniteProgram

_VERIFIERS = {}


@dataclass
class Verification:
    ok: bool
    residuals: dict = field(default_factory=dict)
    kind: str = ""

    def __bool__(self):
        return bool(self.ok)

    def report(self):
        lines = [f"{self.kind}: {'verified' if self.ok else 'REJECTED'}"]
        lines += [f"  {k} = {v:.3e}" for k, v in self.residuals.items()]
        return "\n".join(lines)


def register_verifier(kind, fn):
    _VERIFIERS[kind] = fn


def _finish(kind, residuals, tol, extra_ok=True):
    ok = extra_ok and all(np.isfinite(v) and v <= tol for v in residuals.values())
    return Verification(bool(ok), {k: float(v) for k, v in residuals.items()}, kind)


def min_eig(M):
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh((M + M.conj().T) / 2)[0])


# ---------------------------------------------------------------- LP
def _lp_primal_residual(p, x):
    Ax = p.A @ x
    viol = np.zeros(p.A.shape[0])
    for i, s in enumerate(p.sense):
        if s == ">=":
            viol[i] = max(p.b[i] - Ax[i], 0.0)
        elif s == "<=":
            viol[i] = max(Ax[i] - p.b[i], 0.0)
        else:
            viol[i] = abs(Ax[i] - p.b[i])
    bnd = np.maximum(p.lb - x, 0.0).max(initial=0.0)
    bnd = max(bnd, np.maximum(x - p.ub, 0.0).max(initial=0.0))
    return max(viol.max(initial=0.0), bnd)


def _lp_dual_parts(p, y, r):
    sign = 0.0
    for i, s in enumerate(p.sense):
        if s == ">=":
            sign = max(sign, -y[i])
        elif s == "<=":
            sign = max(sign, y[i])
    fin_l, fin_u = np.isfinite(p.lb), np.isfinite(p.ub)
    sign = max(sign, np.maximum(r[~fin_l], 0.0).max(initial=0.0))
    sign = max(sign, np.maximum(-r[~fin_u], 0.0).max(initial=0.0))
    rp = np.where(fin_l, np.maximum(r, 0.0), 0.0)
    rn = np.where(fin_u, np.minimum(r, 0.0), 0.0)
    val = float(p.b @ y) + float(np.where(fin_l, p.lb, 0.0) @ rp) + float(np.where(fin_u, p.ub, 0.0) @ rn)
    return sign, val


def _verify_lp_dual(cert, p: LinearProgram):
    x, y, r = (np.asarray(cert.payload[k], dtype=float) for k in ("x", "y", "r"))
    if x.shape != p.c.shape or y.shape != (p.A.shape[0],) or r.shape != p.c.shape:
        raise ValueError("lp-dual payload does not match the problem shape")
    scale = 1.0 + np.abs(p.c).max(initial=0.0) + np.abs(p.b).max(initial=0.0)
    sign, dval = _lp_dual_parts(p, y, r)
    obj = float(p.c @ x)
    res = {
        "primal_infeasibility": _lp_primal_residual(p, x) / scale,
        "dual_sign": sign / scale,
        "stationarity": float(np.abs(p.c - p.A.T @ y - r).max(initial=0.0)) / scale,
        "gap": abs(obj - dval) / (1.0 + abs(obj)),
    }
    return _finish(cert.kind, res, cert.tol)


def _verify_lp_farkas(cert, p: LinearProgram):
    y, r = (np.asarray(cert.payload[k], dtype=float) for k in ("y", "r"))
    sign, dval = _lp_dual_parts(p, y, r)
    size = 1.0 + np.abs(y).max(initial=0.0) + np.abs(r).max(initial=0.0)
    res = {
        "dual_sign": sign / size,
        "homogeneous_stationarity": float(np.abs(p.A.T @ y + r).max(initial=0.0)) / size,
        "negated_separation": max(0.0, cert.tol - dval / size),
    }
    return _finish(cert.kind, res, cert.tol)


def _verify_lp_ray(cert, p: LinearProgram):
    d = np.asarray(cert.payload["d"], dtype=float)
    Ad = p.A @ d
    viol = 0.0
    for i, s in enumerate(p.sense):
        if s == ">=":
            viol = max(viol, -Ad[i])
        elif s == "<=":
            viol = max(viol, Ad[i])
        else:
            viol = max(viol, abs(Ad[i]))
    viol = max(viol, np.maximum(-d[np.isfinite(p.lb)], 0).max(initial=0.0))
    viol = max(viol, np.maximum(d[np.isfinite(p.ub)], 0).max(initial=0.0))
    res = {"ray_infeasibility": viol, "negated_descent": max(0.0, cert.tol + float(p.c @ d))}
    return _finish(cert.kind, res, cert.tol)


# ---------------------------------------------------------------- SDP
def _sdp_parts(cert, p):
    Zs = [np.asarray(Z, dtype=float) for Z in cert.payload.get("Z", [])]
    if len(Zs) != len(p.blocks) or any(Z.shape != (b.dim, b.dim) for Z, b in zip(Zs, p.blocks)):
        raise ValueError("sdp certificate blocks do not match the problem")
    lam = np.asarray(cert.payload.get("lam", np.zeros(p.G.shape[0])), dtype=float)
    y = np.asarray(cert.payload.get("y", np.zeros(p.A.shape[0])), dtype=float)
    if lam.shape != (p.G.shape[0],) or y.shape != (p.A.shape[0],):
        raise ValueError("sdp certificate multipliers do not match the problem")
    return Zs, lam, y


def _verify_sdp_dual(cert, p: SemidefiniteProgram):
    Zs, lam, y = _sdp_parts(cert, p)
    x = np.asarray(cert.payload["x"], dtype=float)
    scale = 1.0 + np.abs(p.c).max(initial=0.0)
    zscale = 1.0 + max([np.abs(Z).max(initial=0.0) for Z in Zs] + [0.0])
    prim = 0.0
    for blk in p.blocks:
        prim = max(prim, -min_eig(blk.evaluate(x)))
    if p.G.shape[0]:
        prim = max(prim, np.maximum(p.G @ x - p.h, 0.0).max())
    if p.A.shape[0]:
        prim = max(prim, np.abs(p.A @ x - p.b).max())
    dsign = max([-min_eig(Z) for Z in Zs] + [0.0])
    if lam.size:
        dsign = max(dsign, -lam.min())
    obj = float(p.c @ x)
    dobj = p.dual_objective(Zs, lam, y)
    res = {
        "primal_infeasibility": prim,
        "dual_psd": dsign / zscale,
        "stationarity": float(np.abs(p.adjoint(Zs, lam, y) - p.c).max(initial=0.0)) / scale,
        "gap": abs(obj - dobj) / (1.0 + abs(obj) + abs(dobj)),
    }
    return _finish(cert.kind, res, cert.tol)


def _verify_sdp_farkas(cert, p: SemidefiniteProgram):
    Zs, lam, y = _sdp_parts(cert, p)
    size = 1.0 + sum(float(np.trace(Z)) for Z in Zs) + float(np.abs(lam).sum()) + float(np.abs(y).sum())
    dsign = max([-min_eig(Z) for Z in Zs] + [0.0])
    if lam.size:
        dsign = max(dsign, -lam.min())
    dval = p.dual_objective(Zs, lam, y)
    res = {
        "dual_psd": dsign / size,
        "homogeneous_stationarity": float(np.abs(p.adjoint(Zs, lam, y)).max(initial=0.0)) / size,
        "negated_separation": max(0.0, cert.tol - dval / size),
    }
    return _finish(cert.kind, res, cert.tol)


register_verifier("lp-dual", _verify_lp_dual)
register_verifier("lp-farkas", _verify_lp_farkas)
register_verifier("lp-ray", _verify_lp_ray)
register_verifier("sdp-dual", _verify_sdp_dual)
register_verifier("sdp-farkas", _verify_sdp_farkas)


def verify_certificate(cert: Certificate, context):
    """Re-validate ``cert`` against ``context`` (the problem or world object it refers to)."""
    if cert is None:
        return Verification(False, {}, "missing")
    try:
        fn = _VERIFIERS[cert.kind]
    except KeyError:
        # world modules register on import
        from .. import loc, quant, sep  # noqa: F401

        fn = _VERIFIERS.get(cert.kind)
        if fn is None:
            raise ValueError(f"unknown certificate kind {cert.kind!r}")
    return fn(cert, context)
