"""Separable states: DPS witness cones, SEP connectors, spin-squeezing witnesses.

A connector on input parties ``d_1 .. d_m`` with output dimension ``d_out`` is
stored through its Choi operator W on ``in (x) out`` with the convention
``Omega(sigma) = tr_in[W (sigma (x) I_out)]``. It is a SEP connector when W is a
witness and ``I - tr_out W`` is a witness on the inputs; both memberships are
certified through the DPS decomposition cone: with parties ``1..m`` copied k
times (the last party never is),

    Pi_sym (W (x) I_copies) Pi_sym = sum_A V_A^{T_A},   V_A >= 0,

summed over bipartitions A of the extended parties.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .conic import Certificate, Expr, HExpr, Model, block, Verification, min_eig, register_verifier
from .linalg import bipartitions, hermitian_basis, kron_all, partial_trace, partial_transpose, sym_projector

DIM_GUARD = 2000
CONE_TOL = 1e-8
PSD_TOL = 1e-9
PAULI_BASIS = hermitian_basis(2)


class GuardError(ValueError):
    pass


# ------------------------------------------------------------ Hermitian blocks
@dataclass
class HermitianBlock:
    """Hermitian operator on a declared factorization, stored as (symmetric, antisymmetric) real parts."""

    re: np.ndarray
    im: np.ndarray
    dims: tuple

    @staticmethod
    def from_matrix(M, dims):
        M = np.asarray(M, dtype=complex)
        dims = tuple(int(d) for d in dims)
        if M.shape != (int(np.prod(dims)),) * 2:
            raise ValueError("matrix does not match the factorization")
        H = 0.5 * (M + M.conj().T)
        return HermitianBlock(H.real.copy(), H.imag.copy(), dims)

    @property
    def matrix(self):
        return self.re + 1j * self.im

    @property
    def is_real(self):
        return not np.any(self.im)

    def expect(self, rho):
        return float(np.real(np.trace(self.matrix @ rho)))

    def partial_transpose(self, parties):
        return HermitianBlock.from_matrix(partial_transpose(self.matrix, self.dims, parties), self.dims)

    def to_record(self):
        return {"dims": list(self.dims), "re": self.re, "im": self.im}

    @staticmethod
    def from_record(r):
        return HermitianBlock(np.asarray(r["re"], float), np.asarray(r["im"], float), tuple(r["dims"]))


# ------------------------------------------------------------ extended spaces
def _system_permutation(dims, perm):
    """Permutation matrix P with P (x_0 (x) .. ) = x_perm[0] (x) ..."""
    dims = list(dims)
    D = int(np.prod(dims))
    idx = np.arange(D).reshape(dims).transpose(perm).ravel()
    P = np.zeros((D, D))
    P[np.arange(D), idx] = 1.0
    return P


@dataclass
class ExtendedSpace:
    """Parties ``dims[:-1]`` copied k times, grouped per party, followed by the last party."""

    dims: tuple
    k: int
    ext_dims: tuple
    embed: np.ndarray  # Pi_sym P: maps the operator W (x) I_copies into the extended ordering
    projector: np.ndarray
    isometry: np.ndarray  # columns span the range of the projector

    @property
    def dim(self):
        return int(np.prod(self.ext_dims))

    def extend(self, X):
        """Pi (X (x) I_copies) Pi for a constant or an HExpr."""
        extra = int(np.prod(self.dims[:-1])) ** (self.k - 1) if self.k > 1 else 1
        if isinstance(X, HExpr):
            return X.kron_right(np.eye(extra)).sandwich(self.embed)
        X = np.kron(X, np.eye(extra))
        return self.embed @ X @ self.embed.T

    def copies_traced(self):
        """Positions of the extra copies in the extended ordering."""
        m = len(self.dims) - 1
        return [j * self.k + c for j in range(m) for c in range(1, self.k)]


_SPACES = {}


def extended_space(dims, k):
    dims = tuple(int(d) for d in dims)
    key = (dims, k)
    if key not in _SPACES:
        m = len(dims) - 1
        ext = tuple(d for d in dims[:-1] for _ in range(k)) + (dims[-1],)
        if int(np.prod(ext)) > DIM_GUARD:
            raise GuardError(f"extended dimension {int(np.prod(ext))} exceeds {DIM_GUARD}")
        # W (x) I_copies has ordering [1..m, last, copies of 1 (k-1), copies of 2, ...]
        src_dims = list(dims) + [d for d in dims[:-1] for _ in range(k - 1)]
        order = []
        for j in range(m):
            order.append(j)
            order += [m + 1 + j * (k - 1) + c for c in range(k - 1)]
        order.append(m)
        P = _system_permutation(src_dims, order)
        Pi = kron_all([sym_projector(d, k) for d in dims[:-1]] + [np.eye(dims[-1])]) if m else np.eye(dims[-1])
        w, U = np.linalg.eigh(Pi)
        V = U[:, w > 0.5]
        _SPACES[key] = ExtendedSpace(dims, k, ext, Pi @ P, Pi, V)
    return _SPACES[key]


# ------------------------------------------------------------ witness cone
@dataclass
class DpsWitnessCone:
    """The decomposition cone for given party dims and extension order; ``bipartitions`` fixes the V_A order."""

    dims: tuple
    k: int
    space: ExtendedSpace = field(repr=False)
    bipartitions: list = field(repr=False)

    @staticmethod
    def build(dims, k=1):
        sp_ = extended_space(dims, k)
        return DpsWitnessCone(tuple(dims), k, sp_, bipartitions(len(sp_.ext_dims)))

    def constrain(self, model, W, real=False):
        """Add ``W in cone`` to the model; returns the V_A expressions (V_empty is the remainder)."""
        target = self.space.extend(W)
        Vs = [None]
        rest = target
        for A in self.bipartitions[1:]:
            V = model.herm(self.space.dim, real=real)
            model.psd(V)
            Vs.append(V)
            rest = rest - V.partial_transpose(self.space.ext_dims, A)
        model.psd(rest)
        Vs[0] = rest
        return Vs

    def residual(self, W, Vs):
        target = self.space.extend(np.asarray(W, dtype=complex))
        tot = sum(partial_transpose(V, self.space.ext_dims, A) for V, A in zip(Vs, self.bipartitions))
        return float(np.abs(target - tot).max())

    def complete(self, W, Vs):
        """Clip the V_A (A nonempty) to the PSD cone and recompute V_empty exactly."""
        target = self.space.extend(np.asarray(W, dtype=complex))
        out = [None]
        rest = target.copy()
        for V, A in zip(Vs[1:], self.bipartitions[1:]):
            V = 0.5 * (V + V.conj().T)
            w, U = np.linalg.eigh(V)
            V = (U * np.maximum(w, 0)) @ U.conj().T
            out.append(V)
            rest = rest - partial_transpose(V, self.space.ext_dims, A)
        out[0] = 0.5 * (rest + rest.conj().T)
        return out

    def check(self, W, Vs):
        neg = max(-min(np.linalg.eigvalsh(0.5 * (V + V.conj().T))[0] for V in Vs), 0.0)
        return {"cone_residual": self.residual(W, Vs), "negative_eigenvalue": neg}


def _real_if_possible(*ops):
    return all(np.abs(np.imag(np.asarray(o))).max(initial=0.0) == 0 for o in ops)


# ------------------------------------------------------------ DPS membership
@dataclass
class DpsResult:
    feasible: bool
    status: str
    extension: np.ndarray | None = None
    certificate: Certificate | None = None


def dps_membership(rho, dims, k=2, ppt=True, tol=1e-9):
    """Bose-symmetric (PPT) k-extension of rho, copying every party but the last."""
    rho = np.asarray(rho, dtype=complex)
    dims = tuple(dims)
    space = extended_space(dims, k)
    real = _real_if_possible(rho)
    V = space.isometry
    m = Model()
    X = m.herm(V.shape[1], real=real)
    m.psd(X)
    beta = X.sandwich(V)
    if ppt:
        for A in bipartitions(len(space.ext_dims))[1:]:
            m.psd(beta.partial_transpose(space.ext_dims, A))
    marg = beta.partial_trace(space.ext_dims, space.copies_traced())
    # the marginal is taken in the grouped order, which for one copy per party is the original order
    m.eq(marg.re, rho.real)
    if not real:
        m.eq(marg.im, rho.imag)
    res = m.solve(tol=tol)
    if res.status == "optimal":
        return DpsResult(True, res.status, beta.value(res.x), res.certificate)
    return DpsResult(False, res.status, None, res.certificate)


# ------------------------------------------------------------ SEP connectors
def _basis(dims):
    """Product Hermitian basis on the factorization, first factor major."""
    return [kron_all(list(g)) for g in itertools.product(*[hermitian_basis(d) for d in dims])]


@dataclass
class SepConnector:
    in_dims: tuple
    out_dims: tuple
    choi: np.ndarray
    world: str = "SEP"
    certificate: Certificate | None = None
    info: dict = field(default_factory=dict)

    @property
    def D_in(self):
        return int(np.prod(self.in_dims))

    @property
    def D_out(self):
        return int(np.prod(self.out_dims))

    def _tensor(self):
        return self.choi.reshape(self.D_in, self.D_out, self.D_in, self.D_out)

    def apply(self, sigma):
        """Omega(sigma) = tr_in[W (sigma (x) I)]."""
        return np.einsum("abcd,ca->bd", self._tensor(), np.asarray(sigma, dtype=complex))

    def adjoint(self, X):
        """Omega^dagger(X) = tr_out[W (I (x) X)]."""
        return np.einsum("abcd,db->ac", self._tensor(), np.asarray(X, dtype=complex))

    def coefficient_matrix(self):
        """Real matrix acting on Hermitian-basis coefficients r_mu = tr(rho G_mu)."""
        Gi, Go = _basis(self.in_dims), _basis(self.out_dims)
        W = self._tensor()
        M = np.zeros((len(Go), len(Gi)))
        for mu, A in enumerate(Gi):
            out = np.einsum("abcd,ca->bd", W, A)
            for nu, B in enumerate(Go):
                M[nu, mu] = np.real(np.trace(out @ B))
        return M / self.D_in

    @property
    def matrix(self):
        return self.coefficient_matrix()

    def witness(self):
        """The (m+1)-party witness this connector came from (undoes the scaling of ``from_witness``)."""
        return self.choi / self.info.get("scale", 1.0)

    def to_record(self):
        from .io import certificate_record

        return {
            "world": self.world,
            "in_dims": list(self.in_dims),
            "out_dims": list(self.out_dims),
            "choi_re": self.choi.real,
            "choi_im": self.choi.imag,
            "certificate": certificate_record(self.certificate) if self.certificate else None,
        }

    @staticmethod
    def from_record(rec):
        from .io import certificate_from_record

        choi = np.asarray(rec["choi_re"], float) + 1j * np.asarray(rec["choi_im"], float)
        cert = certificate_from_record(rec["certificate"]) if rec.get("certificate") else None
        return SepConnector(tuple(rec["in_dims"]), tuple(rec["out_dims"]), choi, rec.get("world", "SEP"), cert)

    @staticmethod
    def from_witness(W, in_dims, out_dims):
        """Scale an (m+1)-party witness so that I - tr_out W >= 0; the result is a SEP connector."""
        W = np.asarray(W, dtype=complex)
        D_in = int(np.prod(in_dims))
        D_out = int(np.prod(out_dims))
        top = np.linalg.eigvalsh(partial_trace(W, [D_in, D_out], [1]))[-1]
        s = 1.0 / top if top > 0 else 1.0
        return SepConnector(tuple(in_dims), tuple(out_dims), s * W, info={"scale": s})


def coefficient_objective(env, in_dims, out_dims):
    """Choi-space operator C with tr(W C) = sum env[nu, mu] M[nu, mu] for the coefficient matrix M."""
    Gi, Go = _basis(in_dims), _basis(out_dims)
    env = np.asarray(env, dtype=float)
    C = sum(env[nu, mu] * np.kron(A, B) for mu, A in enumerate(Gi) for nu, B in enumerate(Go) if env[nu, mu] != 0)
    if isinstance(C, int):
        C = np.zeros((len(Gi) * len(Go),) * 2, dtype=complex)
    return C / int(np.prod(in_dims))


def _conditions(in_dims, out_dims, k, ppt_output, sym_output):
    """(label, cone, map W -> operator) for every cone membership a connector must satisfy."""
    D_out = int(np.prod(out_dims))
    full = list(in_dims) + [D_out]
    conds = [("choi", DpsWitnessCone.build(full, k), lambda W: W)]
    if ppt_output:
        fine = list(in_dims) + list(out_dims)
        m = len(in_dims)
        conds.append(("choi_pt", DpsWitnessCone.build(full, k), lambda W: W.partial_transpose(fine, [m]) if isinstance(W, HExpr) else partial_transpose(W, fine, [m])))
    D_in = int(np.prod(in_dims))
    norm = DpsWitnessCone.build(list(in_dims), k)

    def slack(W):
        if isinstance(W, HExpr):
            return HExpr.constant(np.eye(D_in)) - W.partial_trace([D_in, D_out], [1])
        return np.eye(D_in) - partial_trace(W, [D_in, D_out], [1])

    conds.append(("norm", norm, slack))
    return conds


def _sym_output_projector(in_dims, sym_output):
    k_out, blocks, last = sym_output
    P = kron_all([sym_projector(d, k_out) for d in blocks] + [np.eye(last)])
    return np.kron(np.eye(int(np.prod(in_dims))), P)


def optimize_sep_connector(objective, in_dims, out_dim, k=1, ppt_output=False, sym_output=None, real=None, tol=1e-9):
    """Minimize tr(W C) over m -> 1 SEP connectors certified with extension order k.

    ``out_dim`` is an int or a factorization; ``ppt_output`` also requires the
    partial transpose on the first output factor to be a witness (2x2 and 2x3
    outputs are then separable). ``sym_output = (k_out, block_dims, last_dim)``
    confines the output to the symmetric subspace of each block, as needed by
    ``depolarize_lift``. The SDP is taken real when the objective is real.
    """
    in_dims = tuple(int(d) for d in in_dims)
    out_dims = (int(out_dim),) if np.isscalar(out_dim) else tuple(int(d) for d in out_dim)
    if ppt_output and (len(out_dims) != 2 or sorted(out_dims) not in ([2, 2], [2, 3])):
        raise ValueError("PPT-output connectors need a 2x2 or 2x3 output")
    if sym_output is not None:
        k_out, blocks, last = sym_output
        if tuple(d for d in blocks for _ in range(k_out)) + (last,) != out_dims:
            raise ValueError("output factorization does not match the symmetric blocks")
    D_in, D_out = int(np.prod(in_dims)), int(np.prod(out_dims))
    C = np.asarray(objective, dtype=complex)
    if C.shape != (D_in * D_out,) * 2:
        raise ValueError("objective must be an operator on in (x) out")
    C = 0.5 * (C + C.conj().T)
    if real is None:
        real = _real_if_possible(C)
    conds = _conditions(in_dims, out_dims, k, ppt_output, sym_output)
    info = {"k": k, "real": bool(real), "ppt_output": bool(ppt_output)}
    if not np.any(C):
        Wv = np.zeros((D_in * D_out,) * 2, dtype=complex)
        Vs = [[np.zeros((c.space.dim,) * 2, dtype=complex) for _ in c.bipartitions] for _, c, _ in conds]
        res = None
    else:
        m = Model()
        W = m.herm(D_in * D_out, real=real)
        Vx = [cone.constrain(m, op(W), real=real) for _, cone, op in conds]
        if sym_output is not None:
            P = _sym_output_projector(in_dims, sym_output)
            diff = W - W.sandwich(P)
            m.eq(diff.re, 0.0)
            if not real:
                m.eq(diff.im, 0.0)
        m.minimize(W.inner(C))
        res = m.solve(tol=tol)
        if res.status != "optimal":
            raise RuntimeError(f"SEP connector SDP ended with status {res.status}")
        Wv = W.value(res.x)
        Wv = 0.5 * (Wv + Wv.conj().T)
        Vs = [cone.complete(op(Wv), [V.value(res.x) for V in Vc]) for (_, cone, op), Vc in zip(conds, Vx)]
    Wv, Vs = _certify(Wv, Vs, conds, in_dims, out_dims, sym_output)
    cert = _sep_certificate(Wv, Vs, in_dims, out_dims, k, ppt_output, sym_output)
    info.update(value=float(np.real(np.trace(Wv @ C))), result=res)
    return SepConnector(in_dims, out_dims, Wv, certificate=cert, info=info)


def _decompose(W, conds):
    """Decompose a fixed (interior) W in every cone by solving the feasibility problems."""
    out = []
    for _, cone, op in conds:
        X = op(W)
        real = _real_if_possible(X)
        m = Model()
        Vs = cone.constrain(m, HExpr.constant(X), real=real)
        res = m.solve(tol=1e-10)
        if res.status != "optimal":
            raise RuntimeError("fixed operator is not in the witness cone")
        out.append(cone.complete(X, [V.value(res.x) for V in Vs]))
    return out


def _certify(W, Vs, conds, in_dims, out_dims, sym_output, margin=1e-11):
    """Mix in an interior connector until every V_A is PSD.

    The interior connector sends sigma to tr(sigma) I / (2 d_out) (restricted to
    the symmetric output blocks when required); its Choi operator and slack are
    positive on the whole extended space when k = 1, so mixing lifts V_empty.
    """
    D_in, D_out = int(np.prod(in_dims)), int(np.prod(out_dims))
    if sym_output is not None:
        P = _sym_output_projector(in_dims, sym_output)
        W_int = P / (2 * np.trace(P).real / D_in)
    else:
        W_int = np.eye(D_in * D_out) / (2 * D_out)
    worst = min(np.linalg.eigvalsh(V[0])[0] for V in Vs)
    if worst >= margin:
        return W, Vs
    Vi = _decompose(W_int, conds)
    floor = min(np.linalg.eigvalsh(V[0])[0] for V in Vi)
    delta = 1.0 if floor <= 0 else min(1.0, (margin - worst) / (floor - worst + margin))
    W2 = (1 - delta) * W + delta * W_int
    V2 = [[(1 - delta) * a + delta * b for a, b in zip(Va, Vb)] for Va, Vb in zip(Vs, Vi)]
    V2 = [cone.complete(op(W2), V) for (_, cone, op), V in zip(conds, V2)]
    return W2, V2


def _sep_certificate(W, Vs, in_dims, out_dims, k, ppt_output, sym_output):
    payload = {
        "choi": np.asarray(W),
        "V": [np.array(V) for V in Vs],
        "in_dims": list(in_dims),
        "out_dims": list(out_dims),
        "k": int(k),
        "ppt_output": bool(ppt_output),
        "sym_output": None if sym_output is None else [int(sym_output[0]), list(sym_output[1]), int(sym_output[2])],
    }
    return Certificate("sep-connector", payload, tol=CONE_TOL)


def _verify_sep_connector(cert, context=None):
    pl = cert.payload
    W = np.asarray(pl["choi"], dtype=complex)
    if isinstance(context, SepConnector) and np.abs(context.choi - W).max() > 1e-12:
        return Verification(False, {"choi_mismatch": float("inf")}, cert.kind)
    in_dims, out_dims = tuple(pl["in_dims"]), tuple(pl["out_dims"])
    sym = pl.get("sym_output")
    conds = _conditions(in_dims, out_dims, pl["k"], pl["ppt_output"], sym)
    res = {"cone_residual": 0.0, "negative_eigenvalue": 0.0, "hermiticity": float(np.abs(W - W.conj().T).max())}
    for (_, cone, op), Vs in zip(conds, pl["V"]):
        r = cone.check(op(W), [np.asarray(V, dtype=complex) for V in Vs])
        res["cone_residual"] = max(res["cone_residual"], r["cone_residual"])
        res["negative_eigenvalue"] = max(res["negative_eigenvalue"], r["negative_eigenvalue"])
    if sym is not None:
        P = _sym_output_projector(in_dims, sym)
        res["symmetric_support"] = float(np.abs(P @ W @ P - W).max())
    ok = res["cone_residual"] <= cert.tol and res["negative_eigenvalue"] <= PSD_TOL and res["hermiticity"] <= 1e-12 and res.get("symmetric_support", 0.0) <= cert.tol
    return Verification(ok, res, cert.kind)


register_verifier("sep-connector", _verify_sep_connector)


def certify_sep_connector(conn):
    from .conic import verify_certificate

    return verify_certificate(conn.certificate, conn)


def ppt_output_connector(objective, in_dims, out_dims, k=1, **kw):
    """m -> 2 connector whose outputs are PPT, hence separable for 2x2 and 2x3 outputs."""
    out_dims = tuple(out_dims)
    if sorted(out_dims) not in ([2, 2], [2, 3]):
        raise ValueError(f"unsupported output dims {out_dims}; need 2x2 or 2x3")
    return optimize_sep_connector(objective, in_dims, out_dims, k=k, ppt_output=True, **kw)


def depolarizing_weight(d, k):
    return k / (k + d)


def depolarize(X, d, k):
    """Omega^{d,k}(X) = k/(k+d) X + d/(k+d) tr(X) I/d."""
    w = depolarizing_weight(d, k)
    return w * X + (1 - w) * np.trace(X) * np.eye(d) / d


def _apply_factor_map(X, dims, j, fn):
    """Apply a linear map to tensor factor j of an operator (by expanding in matrix units)."""
    dims = list(dims)
    d = dims[j]
    out = np.zeros_like(X, dtype=complex)
    n = len(dims)
    T = X.reshape(dims + dims)
    for a in range(d):
        for b in range(d):
            E = np.zeros((d, d))
            E[a, b] = 1.0
            img = fn(E)
            # component of X along |a><b| on factor j
            sl = [slice(None)] * (2 * n)
            sl[j], sl[n + j] = a, b
            comp = T[tuple(sl)]
            full = np.multiply.outer(comp, img)
            # move the new factor axes back into place
            axes = list(range(2 * n - 2))
            ins_r, ins_c = 2 * n - 2, 2 * n - 1
            order = axes[:j] + [ins_r] + axes[j : n - 1] + axes[n - 1 : n - 1 + j] + [ins_c] + axes[n - 1 + j :]
            out += full.transpose(order).reshape(X.shape)
    return out


def depolarize_lift(conn, k):
    """m -> m' connector: trace the extra copies of each symmetric output block and depolarize the kept copy.

    ``conn`` must be an m -> 1 connector built with ``sym_output = (k, blocks, last)``.
    """
    sym = conn.certificate.payload.get("sym_output") if conn.certificate is not None else None
    if sym is None or sym[0] != k:
        raise ValueError("factorization mismatch: connector output is not symmetric in blocks of k copies")
    _, blocks, last = sym
    out_dims = list(conn.out_dims)
    D_in = conn.D_in
    P = _sym_output_projector(conn.in_dims, (k, blocks, last))
    if np.abs(P @ conn.choi @ P - conn.choi).max() > 1e-8:
        raise ValueError("factorization mismatch: Choi operator leaves the symmetric subspace")
    dims = [D_in] + out_dims
    traced = [1 + j * k + c for j in range(len(blocks)) for c in range(1, k)]
    W = partial_trace(conn.choi, dims, traced)
    new_dims = [D_in] + list(blocks) + [last]
    for j, d in enumerate(blocks):
        W = _apply_factor_map(W, new_dims, 1 + j, lambda E, d=d: depolarize(E, d, k))
    info = {"lifted_from": conn.out_dims, "k": k}
    return SepConnector(conn.in_dims, tuple(blocks) + (last,), W, certificate=conn.certificate, info=info)


def sample_connector_checks(conn, rng, n=100, mixed=False):
    """Worst output eigenvalue and worst trace increase over random product inputs."""
    from .linalg import random_product_state

    worst_eig, worst_norm = np.inf, -np.inf
    for _ in range(n):
        s = random_product_state(list(conn.in_dims), rng, mixed=mixed)
        out = conn.apply(s)
        worst_eig = min(worst_eig, np.linalg.eigvalsh(0.5 * (out + out.conj().T))[0])
        worst_norm = max(worst_norm, np.trace(out).real - 1.0)
    return worst_eig, worst_norm


# ------------------------------------------------------------ spin-squeezing witnesses
def collective_spin(m):
    """J_x, J_y, J_z = 1/2 sum_j sigma_i^(j) on m qubits."""
    out = []
    for s in PAULI_BASIS[1:]:
        J = sum(kron_all([s if i == j else np.eye(2) for i in range(m)]) for j in range(m))
        out.append(0.5 * J)
    return out


def toth_witness(m, lam=(0.0, 0.0, 0.0)):
    """sum_i (J_i - lambda_i I)^2 - (m/2) I; nonnegative on fully separable states."""
    if m < 2:
        raise ValueError("m >= 2")
    D = 2**m
    W = -0.5 * m * np.eye(D, dtype=complex)
    for J, l in zip(collective_spin(m), lam):
        X = J - l * np.eye(D)
        W = W + X @ X
    return HermitianBlock.from_matrix(W, (2,) * m)


def toth_grid(m, step=0.5):
    """lambda_i in {-m/2, .., m/2} in steps of ``step`` per axis."""
    vals = np.arange(-m / 2, m / 2 + step / 2, step)
    return [tuple(v) for v in itertools.product(vals, repeat=3)]


def compose_toth_w6():
    """Six-qubit witness: the m = 4 operator turned into a 3 -> 1 connector on each triple, fed to the m = 2 operator."""
    W4 = toth_witness(4).matrix
    conn = SepConnector.from_witness(W4, (2, 2, 2), (2,))
    W2 = toth_witness(2).matrix
    P = PAULI_BASIS
    adj = [conn.adjoint(s) for s in P]
    W6 = np.zeros((64, 64), dtype=complex)
    for a, b in itertools.product(range(4), repeat=2):
        c = np.real(np.trace(W2 @ np.kron(P[a], P[b]))) / 4
        if c != 0:
            W6 += c * np.kron(adj[a], adj[b])
    return HermitianBlock.from_matrix(W6, (2,) * 6), conn


@dataclass
class DetectionResult:
    value: float
    state: np.ndarray
    grid_min: float
    variance_gap: float
    status: str
    info: dict = field(default_factory=dict)


def toth_detection(W6=None, grid=None, exact=False, tol=1e-8):
    """min tr(W6 rho) over 6-qubit states obeying tr(toth_witness(6, lambda) rho) >= 0 on the grid.

    Each grid constraint reads sum_i <J_i^2> - 2 lambda_i <J_i> + lambda_i^2 >= 3,
    so it only involves the means a_i = <J_i> and b = sum_i <J_i^2>, which enter
    as auxiliary variables. ``exact`` adds the condition for every lambda,
    b - 3 >= |a|^2, as a Schur-complement PSD block. ``variance_gap`` reports
    sum_i Var(J_i) - 3 for the state found.
    """
    if W6 is None:
        W6, _ = compose_toth_w6()
    W6m = W6.matrix if isinstance(W6, HermitianBlock) else np.asarray(W6)
    grid = toth_grid(6) if grid is None else grid
    Js = collective_spin(6)
    real = _real_if_possible(W6m)
    m = Model()
    rho = m.herm(64, real=real)
    m.psd(rho)
    m.eq(rho.trace(), 1.0)
    a = m.var(3)
    b = m.var(1)
    for i, J in enumerate(Js):
        m.eq(rho.inner(J) - a[i], 0.0)
    m.eq(sum(rho.inner(J @ J) for J in Js) - b[0], 0.0)
    for lam in grid:
        m.ge(b[0] - 2 * lam[0] * a[0] - 2 * lam[1] * a[1] - 2 * lam[2] * a[2], 3.0 - sum(l * l for l in lam))
    if exact:
        top = (b - 3.0).reshape((1, 1))
        m.psd(block([[top, a.reshape((1, 3))], [a.reshape((3, 1)), Expr.constant(np.eye(3))]]))
    m.minimize(rho.inner(W6m))
    res = m.solve(tol=tol)
    if res.status != "optimal":
        raise RuntimeError(f"detection SDP ended with status {res.status}")
    R = rho.value(res.x)
    R = 0.5 * (R + R.conj().T)
    val = float(np.real(np.trace(W6m @ R)))
    var = sum(np.real(np.trace(J @ J @ R)) - np.real(np.trace(J @ R)) ** 2 for J in Js) - 3.0
    return DetectionResult(val, R, _grid_min(R, Js, grid), float(var), res.status, {"grid_size": len(grid), "exact": exact, "result": res})


def _grid_min(R, Js, grid):
    a = np.array([np.real(np.trace(J @ R)) for J in Js])
    b = np.array([np.real(np.trace(J @ J @ R)) for J in Js])
    G = np.array(grid)
    return float((b.sum() - 2 * G @ a + (G**2).sum(1) - 3.0).min())


# ------------------------------------------------------------ hybrid STEER witness
def steer_measurements(control=False):
    """Two-qubit effects U[x][a] and one-qubit effects V[y][b]; ``control`` swaps SWAP for a projector."""
    I4 = np.eye(4)
    I2 = np.eye(2)
    sx, sy, sz = PAULI_BASIS[1:]
    from .linalg import swap

    U00 = 0.5 * (I4 + np.kron(sz, sz)) if control else swap(2).astype(complex)
    U01 = 0.5 * (I4 + np.kron(sy, sy))
    U = [[U00, I4 - U00], [U01, I4 - U01]]
    V00 = 0.5 * (I2 + sx)
    V01 = 0.5 * (I2 + sz)
    V = [[V00, I2 - V00], [V01, I2 - V01]]
    return U, V


def hybrid_steer_witness(control=False, form=None):
    """X = sum C(a,x,b,y) U^{a|x} (x) V^{b|y} on three qubits, C the normalized CHSH form."""
    from .loc import chsh_form

    C = chsh_form() if form is None else np.asarray(form)
    U, V = steer_measurements(control)
    X = np.zeros((8, 8), dtype=complex)
    for a, x, b, y in itertools.product(range(2), repeat=4):
        c = C[2 * a + x, 2 * b + y]
        if c:
            X += c * np.kron(U[x][a], V[y][b])
    return HermitianBlock.from_matrix(X, (2, 2, 2))


@dataclass
class PptMinimum:
    value: float
    state: np.ndarray
    status: str
    certificate: Certificate | None = None
    problem: object = None


def min_over_ppt(X, dims=None, tol=1e-9):
    """min tr(X rho) over states with a positive partial transpose on every party."""
    if isinstance(X, HermitianBlock):
        dims = X.dims if dims is None else dims
        Xm = X.matrix
    else:
        Xm = np.asarray(X, dtype=complex)
    dims = list(dims)
    real = _real_if_possible(Xm)
    m = Model()
    rho = m.herm(Xm.shape[0], real=real)
    m.psd(rho)
    for j in range(len(dims)):
        m.psd(rho.partial_transpose(dims, [j]))
    m.eq(rho.trace(), 1.0)
    m.minimize(rho.inner(Xm))
    res = m.solve(tol=tol)
    if res.status != "optimal":
        raise RuntimeError(f"PPT minimization ended with status {res.status}")
    R = rho.value(res.x)
    return PptMinimum(float(np.real(np.trace(Xm @ R))), R, res.status, res.certificate, res.info.get("problem"))


def witness_to_connector(W, in_dims, out_dims):
    return SepConnector.from_witness(W, in_dims, out_dims)


def connector_to_witness(conn):
    return conn.witness()
