"""Quantum boxes: NPA-style moment matrices, positivity certificates and m -> 1 connectors.

Operators are projectors ``E^k_{a|x}`` with ``a < O_k - 1`` (the last outcome
is eliminated by completeness). Words are products of such letters; letters of
different parties commute, repeated letters collapse and distinct outcomes of
one input annihilate. Moment matrices are taken real symmetric, so a word is
identified with its reverse.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .boxes import Box, Scenario
from .conic import Certificate, Model, Verification, min_eig, register_verifier
from .loc import Connector, _as_scenario, _output_functionals, abbreviated_objective, abbreviation_map, abbreviate

WORD_GUARD = 2000
LEVELS = (1, "1+AB", 2, "local")


def _reduce(word):
    """Commute parties apart, then apply idempotence and orthogonality; None for the zero operator."""
    out = []
    for l in sorted(word, key=lambda l: l[0]):
        if out and out[-1][0] == l[0]:
            p = out[-1]
            if p == l:
                continue
            if p[2] == l[2]:
                return None
        out.append(l)
    return tuple(out)


def canonical(word):
    a = _reduce(word)
    if a is None:
        return None
    b = _reduce(tuple(reversed(word)))
    return min(a, b)


def _letters(scenario):
    return [[(k, a, x) for a in range(O - 1) for x in range(I)] for k, (O, I) in enumerate(scenario.parties)]


def _words(scenario, level):
    per = _letters(scenario)
    flat = [l for p in per for l in p]
    words = [()] + [(l,) for l in flat]
    if level == 1:
        return words
    if level == "1+AB":
        for k1, k2 in itertools.combinations(range(scenario.m), 2):
            words += [(l1, l2) for l1 in per[k1] for l2 in per[k2]]
        return words
    if level == 2:
        seen = set(words)
        for l1, l2 in itertools.product(flat, repeat=2):
            w = _reduce((l1, l2))
            if w is not None and w not in seen:
                seen.add(w)
                words.append(w)
        return words
    if level == "local":
        words = []
        for combo in itertools.product(*[[None] + p for p in per]):
            words.append(tuple(l for l in combo if l is not None))
        return words
    raise ValueError(f"unknown level {level!r}; choose from {LEVELS}")


class MomentBasis:
    """Moment-matrix structure: monomial of every entry, indicator matrices G_j and extraction of box coordinates."""

    def __init__(self, scenario, level="1+AB", guard=WORD_GUARD):
        self.scenario = scenario
        self.level = level
        self.words = _words(scenario, level)
        n = len(self.words)
        if n > guard:
            raise MemoryError(f"{n} words exceed the guard {guard}")
        self.n = n
        mono = {}
        entry = np.full((n, n), -1, dtype=int)
        for i, u in enumerate(self.words):
            udag = tuple(reversed(u))
            for j in range(i, n):
                w = canonical(udag + self.words[j])
                if w is None:
                    continue
                idx = mono.setdefault(w, len(mono))
                entry[i, j] = entry[j, i] = idx
        self.monomials = list(mono)
        self.index = mono
        self.entry = entry
        J = len(mono)
        nz = np.flatnonzero(entry.ravel() >= 0)
        # G[j, u*n + v] = 1 where entry (u, v) carries monomial j
        self.G = sp.csr_matrix((np.ones(nz.size), (entry.ravel()[nz], nz)), shape=(J, n * n))
        self.support = np.asarray(self.G.sum(axis=1)).ravel()
        # abbreviated coordinate -> monomial
        amap = abbreviation_map(scenario)
        D = scenario.abbreviated_length
        coord = np.zeros(D, dtype=int)
        for A in range(D):
            labels = amap.decode(A)
            w = canonical(tuple((k, lab[0], lab[1]) for k, lab in enumerate(labels) if lab is not None))
            if w not in mono:
                raise ValueError(f"level {level!r} cannot express the box coordinate {labels}")
            coord[A] = mono[w]
        self.coord = coord
        self.place = sp.csr_matrix((np.ones(D), (coord, np.arange(D))), shape=(J, D))

    @property
    def size(self):
        return self.n

    def G_matrix(self, j):
        return np.asarray(self.G[j].todense()).reshape(self.n, self.n)

    def extraction(self, A):
        """F with tr(Gamma F) = P(A) for the abbreviated coordinate A."""
        j = self.coord[A]
        u, v = np.argwhere(self.entry == j)[0]
        F = np.zeros((self.n, self.n))
        F[u, v] += 0.5
        F[v, u] += 0.5
        return F

    def targets(self, u):
        """Right-hand sides tr(sum_A u_A F_A G_j) for an abbreviated functional u."""
        return self.place @ np.asarray(u, dtype=float).ravel()

    def residual(self, Z, u):
        return self.G @ np.asarray(Z).ravel() - self.targets(u)

    def moment_matrix(self, model):
        """Real part of the moment matrix of a quantum model (measurements[k][x][a] projectors)."""
        dims = model.dims
        ops = {}
        for k, (O, I) in enumerate(self.scenario.parties):
            for a in range(O - 1):
                for x in range(I):
                    facs = [np.eye(d) for d in dims]
                    facs[k] = model.measurements[k][x][a]
                    op = facs[0]
                    for f in facs[1:]:
                        op = np.kron(op, f)
                    ops[(k, a, x)] = op
        D = int(np.prod(dims))
        vecs = []
        for w in self.words:
            X = np.eye(D, dtype=complex)
            for l in w:
                X = X @ ops[l]
            vecs.append(X)
        rho = model.state
        G = np.zeros((self.n, self.n))
        for i, Xi in enumerate(vecs):
            for j, Xj in enumerate(vecs):
                G[i, j] = np.trace(rho @ Xi.conj().T @ Xj).real
        return G


_BASES = {}


def moment_basis(scenario, level="1+AB"):
    key = (scenario, level)
    if key not in _BASES:
        _BASES[key] = MomentBasis(scenario, level)
    return _BASES[key]


def build_moment_basis(scenario, level="1+AB"):
    return moment_basis(_as_scenario(scenario), level)


def _abbreviated_functional(w, scenario):
    w = np.asarray(w, dtype=float)
    if w.size == scenario.abbreviated_length and w.ndim <= 1:
        return w.ravel()
    return np.asarray(abbreviation_map(scenario).S.T @ w.ravel()).ravel()


def _exact_match(Z, u, basis):
    """Spread each monomial's residual evenly over its support so the linear match is exact."""
    r = basis.targets(u) - basis.G @ Z.ravel()
    corr = basis.G.T @ (r / np.maximum(basis.support, 1))
    Z = Z + corr.reshape(Z.shape)
    return (Z + Z.T) / 2


@dataclass
class QuantumPositivityCertificate:
    Z: np.ndarray
    residual: float
    min_eig: float
    certificate: Certificate
    certified: bool = True


@dataclass
class NotCertified:
    status: str
    info: dict = field(default_factory=dict)
    certified: bool = False


def _moment_certificate(Z, u, scenario, level):
    return Certificate(
        "moment",
        {"Z": np.asarray(Z), "functional": np.asarray(u), "outputs": list(scenario.outputs), "inputs": list(scenario.inputs), "level": level},
        tol=1e-8,
    )


def certify_positive_quantum(w, scenario, level="1+AB", tol=1e-9):
    """Look for Z >= 0 matching ``w`` on every G_j; NotCertified only means 'not at this level'."""
    scenario = _as_scenario(scenario)
    basis = moment_basis(scenario, level)
    u = _abbreviated_functional(w, scenario)
    m = Model()
    Z = m.sym(basis.n)
    m.psd(Z)
    m.eq(Z.reshape(basis.n * basis.n).linear(basis.G), basis.targets(u))
    # maximize the smallest eigenvalue up to a cap so the certificate sits inside the cone
    t = m.var(1)
    m.psd(Z - _scalar_times_identity(t, basis.n))
    m.ge(-t, -1.0)
    m.maximize(t.sum())
    res = m.solve(tol=tol)
    if res.status != "optimal":
        return NotCertified(res.status, {"result": res})
    Zv = _exact_match(Z.value(res.x).reshape(basis.n, basis.n), u, basis)
    lam = min_eig(Zv)
    if lam < -1e-9:
        return NotCertified("negative", {"min_eig": lam, "result": res})
    r = float(np.abs(basis.residual(Zv, u)).max(initial=0.0))
    return QuantumPositivityCertificate(Zv, r, lam, _moment_certificate(Zv, u, scenario, level))


def _scalar_times_identity(t, n):
    """Expression t * I_n for a scalar variable t (shape (1,))."""
    L = sp.csr_matrix((np.ones(n), (np.arange(n) * (n + 1), np.zeros(n, dtype=int))), shape=(n * n, 1))
    return t.linear(L, (n, n))


def _verify_moment(cert, context=None):
    pl = cert.payload
    sc = Scenario(pl["outputs"], pl["inputs"])
    basis = moment_basis(sc, pl["level"])
    Z = np.asarray(pl["Z"], dtype=float)
    u = np.asarray(pl["functional"], dtype=float)
    res = {"negative_eigenvalue": max(-min_eig(Z), 0.0), "asymmetry": float(np.abs(Z - Z.T).max()), "linear_match": float(np.abs(basis.residual(Z, u)).max(initial=0.0))}
    ok = res["negative_eigenvalue"] <= 1e-9 and res["asymmetry"] <= 1e-12 and res["linear_match"] <= cert.tol
    return Verification(ok, res, cert.kind)


# ------------------------------------------------------------ NPA membership
@dataclass
class NpaResult:
    feasible: bool
    gamma: np.ndarray | None
    status: str
    certificate: Certificate | None = None


def npa_membership(box, level="1+AB", tol=1e-9):
    """Is there a PSD moment matrix at ``level`` whose box coordinates equal ``box``?"""
    sc = box.scenario
    basis = moment_basis(sc, level)
    q = abbreviate(box)
    J = len(basis.monomials)
    m = Model()
    c = m.var(J)
    Gm = c.linear(basis.G.T, (basis.n, basis.n))
    m.psd(Gm)
    fixed = sp.csr_matrix((np.ones(len(q)), (np.arange(len(q)), basis.coord)), shape=(len(q), J))
    m.eq(c.linear(fixed), q)
    res = m.solve(tol=tol)
    if res.status == "optimal":
        return NpaResult(True, Gm.value(res.x).reshape(basis.n, basis.n), res.status, res.certificate)
    return NpaResult(False, None, res.status, res.certificate)


# ------------------------------------------------------------ connectors
def connector_constraints(m, M, in_type, out_type, level="1+AB"):
    """Add to model ``m`` the conditions making the abbreviated matrix expression M a quantum connector.

    Returns the moment-matrix variables, one per output positivity functional.
    """
    basis = moment_basis(in_type, level)
    F, off = _output_functionals(out_type)
    D_out, D_in = M.shape
    n = basis.n
    vecM = M.reshape(D_out * D_in)
    e0 = np.zeros(D_in)
    e0[0] = 1.0
    Zs = []
    for r in range(F.shape[0]):
        Z = m.sym(n)
        m.psd(Z)
        L = basis.place @ sp.kron(sp.csr_matrix(F[r][None, :]), sp.eye(D_in))
        m.eq(Z.reshape(n * n).linear(basis.G) - vecM.linear(L), off[r] * basis.targets(e0))
        Zs.append(Z)
    return Zs


def optimize_quantum_connector(objective, in_type, out_type, level="1+AB", tol=1e-8, abbreviated=False):
    """Minimize <W, C> over m -> 1 connectors whose output positivity functionals are all level-certified.

    Every standard output row and ``E - W_0`` equals a functional matched by its own Z_r >= 0.
    """
    in_type, out_type = _as_scenario(in_type), _as_scenario(out_type)
    if out_type.m != 1:
        raise ValueError("quantum connectors are m -> 1")
    basis = moment_basis(in_type, level)
    Cab = abbreviated_objective(objective, in_type, out_type, abbreviated)
    D_out, D_in = Cab.shape
    F, off = _output_functionals(out_type)
    n = basis.n
    e0 = np.zeros(D_in)
    e0[0] = 1.0
    m = Model()
    M = m.var((D_out, D_in))
    Zs = connector_constraints(m, M, in_type, out_type, level)
    m.minimize(M.reshape(D_out * D_in).dot(Cab.ravel()))
    if not np.any(Cab):
        # every connector is optimal; return the zero connector
        Mv = np.zeros((D_out, D_in))
        Zv = [_exact_match(np.zeros((n, n)), F[r] @ Mv + off[r] * e0, basis) for r in range(F.shape[0])]
        res = None
    else:
        res = m.solve(tol=tol)
        if res.status != "optimal":
            raise RuntimeError(f"quantum connector SDP ended with status {res.status}")
        Mv = M.value(res.x).reshape(D_out, D_in)
        Zv = []
        for r, Z in enumerate(Zs):
            u = F[r] @ Mv + off[r] * e0
            Zv.append(_exact_match(Z.value(res.x).reshape(n, n), u, basis))
        Mv, Zv = _interiorize(Mv, Zv, F, off, basis, out_type)
    cert = Certificate(
        "quant-connector",
        {
            "matrix": Mv,
            "Z": np.array(Zv),
            "level": level,
            "in_outputs": list(in_type.outputs),
            "in_inputs": list(in_type.inputs),
            "out_outputs": list(out_type.outputs),
            "out_inputs": list(out_type.inputs),
        },
        tol=1e-8,
    )
    return Connector(in_type, out_type, Mv, "QUANT", cert, {"value": float(Cab.ravel() @ Mv.ravel()), "result": res})


def certify_quantum_matrix(M, in_type, out_type, level="1+AB"):
    """Certified quantum connector for a given abbreviated matrix.

    Each output functional gets its own moment matrix with the largest
    smallest eigenvalue; if rounding left some of them slightly indefinite the
    matrix is mixed with the interior connector, as for optimized connectors.
    """
    in_type, out_type = _as_scenario(in_type), _as_scenario(out_type)
    basis = moment_basis(in_type, level)
    F, off = _output_functionals(out_type)
    M = np.asarray(M, dtype=float)
    e0 = np.zeros(M.shape[1])
    e0[0] = 1.0
    n = basis.n
    Zv = []
    for r in range(F.shape[0]):
        u = F[r] @ M + off[r] * e0
        m = Model()
        Z = m.sym(n)
        m.eq(Z.reshape(n * n).linear(basis.G), basis.targets(u))
        t = m.var(1)
        m.psd(Z - _scalar_times_identity(t, n))
        m.ge(-t, -1.0)
        m.maximize(t.sum())
        res = m.solve(tol=1e-10)
        if res.status != "optimal" or float(t.value(res.x)[0]) < -1e-7:
            raise RuntimeError(f"matrix is not a level-{level} quantum connector ({res.status})")
        Zv.append(_exact_match(Z.value(res.x).reshape(n, n), u, basis))
    M, Zv = _interiorize(M, Zv, F, off, basis, out_type)
    cert = Certificate(
        "quant-connector",
        {
            "matrix": M,
            "Z": np.array(Zv),
            "level": level,
            "in_outputs": list(in_type.outputs),
            "in_inputs": list(in_type.inputs),
            "out_outputs": list(out_type.outputs),
            "out_inputs": list(out_type.inputs),
        },
        tol=1e-8,
    )
    return Connector(in_type, out_type, M, "QUANT", cert)


def _unit_effect_interior(basis):
    """A positive definite Z representing the unit effect, and its smallest eigenvalue."""
    if not hasattr(basis, "_unit_Z"):
        e0 = np.zeros(basis.scenario.abbreviated_length)
        e0[0] = 1.0
        r = certify_positive_quantum(e0, basis.scenario, basis.level)
        if not r.certified or r.min_eig <= 0:
            raise RuntimeError("unit effect has no interior moment representation at this level")
        basis._unit_Z = (r.Z, r.min_eig)
    return basis._unit_Z


def _interiorize(M, Zs, F, off, basis, out_type, margin=1e-10):
    """Mix the solver's connector with a strictly feasible one so that every Z_r is PSD.

    The interior connector sends every input to the flat box of norm 1/2; its
    row functionals are multiples of the unit effect, which has a positive
    definite representation. The mixing weight is the smallest one that lifts
    every eigenvalue to ``margin``; it is of the order of the solver's eigenvalue error.
    """
    lams = np.array([min_eig(Z) for Z in Zs])
    if lams.min() >= margin:
        return M, Zs
    ZE, tE = _unit_effect_interior(basis)
    O = out_type.outputs[0]
    M_int = np.zeros_like(M)
    M_int[0, 0] = 0.5
    M_int[1:, 0] = 0.5 / O
    e0 = np.zeros(M.shape[1])
    e0[0] = 1.0
    kappa = np.array([(F[r] @ M_int + off[r] * e0)[0] for r in range(F.shape[0])])
    need = [(margin - l) / (k * tE - l + margin) for l, k in zip(lams, kappa) if l < margin]
    delta = min(1.0, max(need))
    M2 = (1 - delta) * M + delta * M_int
    Z2 = [(1 - delta) * Z + delta * k * ZE for Z, k in zip(Zs, kappa)]
    Z2 = [_exact_match(Z, F[r] @ M2 + off[r] * e0, basis) for r, Z in enumerate(Z2)]
    return M2, Z2


def _verify_quant_connector(cert, context=None):
    pl = cert.payload
    M = np.asarray(pl["matrix"], dtype=float)
    if context is not None and isinstance(context, Connector):
        if context.matrix.shape != M.shape or np.abs(context.matrix - M).max() > 1e-12:
            return Verification(False, {"matrix_mismatch": float("inf")}, cert.kind)
    in_type = Scenario(pl["in_outputs"], pl["in_inputs"])
    out_type = Scenario(pl["out_outputs"], pl["out_inputs"])
    basis = moment_basis(in_type, pl["level"])
    F, off = _output_functionals(out_type)
    e0 = np.zeros(M.shape[1])
    e0[0] = 1.0
    neg, match = 0.0, 0.0
    for r, Z in enumerate(np.asarray(pl["Z"], dtype=float)):
        u = F[r] @ M + off[r] * e0
        neg = max(neg, -min_eig(Z))
        match = max(match, float(np.abs(basis.residual(Z, u)).max(initial=0.0)))
    res = {"negative_eigenvalue": max(neg, 0.0), "linear_match": match}
    return Verification(res["negative_eigenvalue"] <= 1e-9 and match <= cert.tol, res, cert.kind)


register_verifier("moment", _verify_moment)
register_verifier("quant-connector", _verify_quant_connector)
