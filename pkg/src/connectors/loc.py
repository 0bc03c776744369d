"""Classical (local) boxes: polytope membership, connectors and their optimization.

Conventions. A party with ``O`` outputs and ``I`` inputs has the doubled leg
``y = a * I + x`` in standard form and ``I (O - 1) + 1`` abbreviated
coordinates: the unmeasured symbol first, then ``(a, x)`` for ``a < O - 1``
in a-major order. Multi-party objects are Kronecker products, first party
major. A connector stores its abbreviated matrix ``M`` (output x input); its
standard form is ``S_out M R_in``.
"""

import graphlib
import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .boxes import Box, Scenario, deterministic_vectors, party_assignments, unit_effect
from .conic import Certificate, LinearProgram, Verification, register_verifier, solve_lp
from .tensor import IN, OUT, ContractionGraph, StructureError, Tensor, contract

VERTEX_GUARD = 10**6
DENSE_GUARD = 2 * 10**8
LOCAL_TOL = 1e-9
NONLOCAL_TOL = 1e-7
WORLDS = ("LOC", "QUANT", "SEP", "STEER")


class GuardError(MemoryError):
    """Problem size exceeds a configured guard."""


# ------------------------------------------------------------ abbreviated form
def party_S(O, I):
    """Single-party map from abbreviated to standard coordinates."""
    S = np.zeros((O * I, I * (O - 1) + 1))
    for a in range(O):
        for x in range(I):
            if a < O - 1:
                S[a * I + x, 1 + a * I + x] = 1.0
            else:
                S[a * I + x, 0] = 1.0
                for b in range(O - 1):
                    S[a * I + x, 1 + b * I + x] = -1.0
    return S


def party_R(O, I):
    """Single-party map from standard to abbreviated coordinates (left inverse of S)."""
    R = np.zeros((I * (O - 1) + 1, O * I))
    R[0, np.arange(O) * I] = 1.0
    for a in range(O - 1):
        for x in range(I):
            R[1 + a * I + x, a * I + x] = 1.0
    return R


def _kron_all(mats, sparse=True):
    out = sp.csr_matrix(np.ones((1, 1))) if sparse else np.ones((1, 1))
    for M in mats:
        out = sp.kron(out, sp.csr_matrix(M), format="csr") if sparse else np.kron(out, M)
    return out


class AbbreviationMap:
    """The matrices S (abbreviated -> standard) and R (standard -> abbreviated) of a scenario."""

    def __init__(self, scenario):
        self.scenario = scenario
        self.S = _kron_all([party_S(O, I) for O, I in scenario.parties])
        self.R = _kron_all([party_R(O, I) for O, I in scenario.parties])
        self.party_labels = []
        for O, I in scenario.parties:
            self.party_labels.append([None] + [(a, x) for a in range(O - 1) for x in range(I)])

    def encode(self, labels):
        """Abbreviated index of a tuple of per-party labels (None or (a, x))."""
        idx = 0
        for lab, table, D in zip(labels, self.party_labels, self.scenario.abbreviated_dims):
            idx = idx * D + table.index(None if lab is None else tuple(lab))
        return idx

    def decode(self, index):
        out = []
        for table, D in zip(reversed(self.party_labels), reversed(self.scenario.abbreviated_dims)):
            index, r = divmod(index, D)
            out.append(table[r])
        return tuple(reversed(out))


@lru_cache(maxsize=64)
def abbreviation_map(scenario):
    return AbbreviationMap(scenario)


def abbreviate(box, tol=1e-9):
    """Abbreviated vector of a no-signalling box."""
    if box.representation == "abbreviated":
        return box.data.copy()
    sig = box.signalling_report()
    if sig > tol:
        raise ValueError(f"signalling box cannot be abbreviated: marginal depends on own input by {sig:.3e}")
    return abbreviation_map(box.scenario).R @ box.data.ravel()


def expand(q, scenario):
    """Standard box S q."""
    q = np.asarray(q, dtype=float).ravel()
    return Box(scenario, abbreviation_map(scenario).S @ q)


# ------------------------------------------------------------ vertices
def vertex_count(scenario):
    n = 1
    for O, I in scenario.parties:
        n *= O**I
    return n


def vertex_matrix(scenario, abbreviated=False, guard=VERTEX_GUARD):
    """Rows: every deterministic box, lexicographic over per-party assignment tuples."""
    if vertex_count(scenario) > guard:
        raise GuardError(f"{vertex_count(scenario)} deterministic boxes exceed the guard {guard}")
    mats = []
    for O, I in scenario.parties:
        V = deterministic_vectors(O, I)
        mats.append(V @ party_R(O, I).T if abbreviated else V)
    return _kron_all(mats, sparse=False)


def vertex_assignments(scenario):
    return list(itertools.product(*[party_assignments(O, I) for O, I in scenario.parties]))


# ------------------------------------------------------------ local membership
@dataclass
class LocalModel:
    scenario: Scenario
    weights: np.ndarray
    slack: float
    certificate: Certificate
    verdict: str = "local"

    def mixture(self):
        return Box(self.scenario, self.weights @ vertex_matrix(self.scenario))


@dataclass
class NotLocal:
    """``functional . Q <= bound`` on every subnormalized local box, violated by the box."""

    scenario: Scenario
    functional: np.ndarray
    bound: float
    violation: float
    slack: float
    certificate: Certificate
    verdict: str = "nonlocal"


@dataclass
class Marginal:
    scenario: Scenario
    slack: float
    verdict: str = "marginal"


def local_membership(box, guard=VERTEX_GUARD, backend="highs"):
    """Decide whether ``box`` (standard entries, possibly subnormalized) is a local mixture.

    Solves min t s.t. |sum_l p_l v_l - P| <= t entrywise, p >= 0, sum p <= 1.
    ``t < 1e-9`` gives a LocalModel; ``t > 1e-7`` a NotLocal whose Bell
    functional comes from the LP duals; anything between is Marginal.
    """
    sc = box.scenario
    V = vertex_matrix(sc, guard=guard)
    P = box.standard().data.ravel()
    N, L = V.shape
    ones = np.ones((L, 1))
    A = sp.vstack(
        [
            sp.hstack([sp.csr_matrix(V.T), ones]),
            sp.hstack([sp.csr_matrix(-V.T), ones]),
            sp.hstack([sp.csr_matrix(-np.ones((1, N))), sp.csr_matrix((1, 1))]),
        ]
    ).tocsr()
    b = np.concatenate([P, -P, [-1.0]])
    c = np.zeros(N + 1)
    c[-1] = 1.0
    lp = LinearProgram(c, A, b, ">=", lb=np.zeros(N + 1))
    res = solve_lp(lp, tol=1e-10, backend=backend)
    if not res.optimal:
        raise RuntimeError(f"membership LP ended with status {res.status}")
    t = float(res.x[-1])
    meta = {"outputs": list(sc.outputs), "inputs": list(sc.inputs)}
    if t < LOCAL_TOL:
        w = np.clip(res.x[:N], 0.0, None)
        cert = Certificate("local-model", {"weights": w, "box": P, **meta}, tol=1e-7)
        return LocalModel(sc, w, t, cert)
    if t <= NONLOCAL_TOL:
        return Marginal(sc, t)
    y = res.dual["y"]
    g = y[:L] - y[L : 2 * L]
    # local bound: the exact vertex maximum (at least 0 for the zero box)
    s = max(float((V @ g).max()), 0.0)
    viol = float(g @ P) - s
    cert = Certificate("bell-functional", {"functional": g, "bound": s, "box": P, **meta}, tol=1e-9)
    return NotLocal(sc, g, s, viol, t, cert)


def is_local(box, **kw):
    return local_membership(box, **kw).verdict == "local"


def _verify_local_model(cert, context=None):
    pl = cert.payload
    sc = Scenario(pl["outputs"], pl["inputs"])
    w = np.asarray(pl["weights"], dtype=float)
    P = np.asarray(pl["box"], dtype=float).ravel()
    if context is not None:
        P_ctx = context.standard().data.ravel() if isinstance(context, Box) else np.asarray(context).ravel()
        if P_ctx.shape != P.shape or np.abs(P_ctx - P).max() > 1e-12:
            return Verification(False, {"box_mismatch": float("inf")}, cert.kind)
    V = vertex_matrix(sc)
    res = {
        "negative_weight": float(max(-w.min(initial=0.0), 0.0)),
        "excess_mass": float(max(w.sum() - 1.0, 0.0)),
        "reconstruction": float(np.abs(w @ V - P).max()),
    }
    ok = res["negative_weight"] <= 1e-10 and res["excess_mass"] <= 1e-9 and res["reconstruction"] <= cert.tol
    return Verification(ok, res, cert.kind)


def _verify_bell_functional(cert, context=None):
    pl = cert.payload
    sc = Scenario(pl["outputs"], pl["inputs"])
    g = np.asarray(pl["functional"], dtype=float).ravel()
    P = np.asarray(pl["box"], dtype=float).ravel()
    if context is not None:
        P_ctx = context.standard().data.ravel() if isinstance(context, Box) else np.asarray(context).ravel()
        if P_ctx.shape != P.shape or np.abs(P_ctx - P).max() > 1e-12:
            return Verification(False, {"box_mismatch": float("inf")}, cert.kind)
    V = vertex_matrix(sc)
    bound = float(pl["bound"])
    res = {
        "local_excess": float(max((V @ g).max() - bound, -bound, 0.0)),
        "negated_violation": float(max(bound - g @ P + cert.tol, 0.0)),
    }
    return Verification(res["local_excess"] <= 1e-9 and res["negated_violation"] <= 0.0, res, cert.kind)


# ------------------------------------------------------------ connectors
def _as_scenario(t):
    if isinstance(t, Scenario):
        return t
    outputs, inputs = t
    return Scenario(outputs, inputs)


@dataclass(frozen=True)
class Connector:
    """Linear map between box types held as its abbreviated matrix (output x input)."""

    in_type: Scenario
    out_type: Scenario
    matrix: np.ndarray
    world: str = "LOC"
    certificate: Certificate | None = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        shape = (self.out_type.abbreviated_length, self.in_type.abbreviated_length)
        if M.shape != shape:
            raise ValueError(f"connector matrix has shape {M.shape}, expected {shape}")
        if self.world not in WORLDS:
            raise ValueError(f"unknown world {self.world!r}")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def from_standard(cls, in_type, out_type, W, **kw):
        """Abbreviated matrix R_out W S_in of a standard-form map."""
        in_type, out_type = _as_scenario(in_type), _as_scenario(out_type)
        W = np.asarray(W, dtype=float).reshape(int(np.prod(out_type.leg_dims)), -1)
        M = abbreviation_map(out_type).R @ W @ abbreviation_map(in_type).S
        return cls(in_type, out_type, np.asarray(M), **kw)

    def standard_matrix(self):
        return np.asarray(abbreviation_map(self.out_type).S @ (abbreviation_map(self.in_type).R.T @ self.matrix.T).T)

    def tensor(self, prefix_out="o", prefix_in="i"):
        """Standard tensor with one outgoing leg per output party and one incoming leg per input party."""
        legs = [(f"{prefix_out}{k}", OUT) for k in range(self.out_type.m)]
        legs += [(f"{prefix_in}{k}", IN) for k in range(self.in_type.m)]
        data = self.standard_matrix().reshape(self.out_type.leg_dims + self.in_type.leg_dims)
        return Tensor(data, legs)

    def apply(self, box, parties=None):
        """Image of ``box``; with ``parties`` the connector acts on those parties only.

        The output parties take the place of the first acted-on party; the rest keep their order.
        """
        sc = box.scenario
        if parties is None:
            parties = list(range(sc.m))
        parties = list(parties)
        if sc.sub(parties) != self.in_type:
            raise ValueError(f"box parties {parties} have type {sc.sub(parties).label()}, connector expects {self.in_type.label()}")
        T = box.standard().data
        rest = [k for k in range(sc.m) if k not in parties]
        T = T.transpose(parties + rest).reshape(int(np.prod(self.in_type.leg_dims)), -1)
        out = self.standard_matrix() @ T
        q = self.out_type.m
        out = out.reshape(self.out_type.leg_dims + tuple(sc.leg_dims[k] for k in rest))
        pos = sum(1 for k in rest if k < parties[0])
        order = list(range(q, q + pos)) + list(range(q)) + list(range(q + pos, q + len(rest)))
        out = out.transpose(order)
        new_sc = sc.sub(rest[:pos]) + self.out_type + sc.sub(rest[pos:])
        return Box(new_sc, out)

    def apply_abbreviated(self, q):
        return self.matrix @ np.asarray(q, dtype=float).ravel()

    def norm_excess(self):
        """max over deterministic inputs of E(W v) - E(v); nonpositive for a connector."""
        A = vertex_matrix(self.in_type, abbreviated=True)
        return float(((self.matrix @ A.T)[0] - A[:, 0]).max())

    def compose(self, other):
        """self after other."""
        if other.out_type != self.in_type:
            raise ValueError("type mismatch in composition")
        return Connector(other.in_type, self.out_type, self.matrix @ other.matrix, world=self.world)

    def to_record(self):
        from . import io

        rec = {
            "type": "connector",
            "format_version": io.FORMAT_VERSION,
            "index_ordering": io.INDEX_ORDERING,
            "world": self.world,
            "in_type": {"outputs": list(self.in_type.outputs), "inputs": list(self.in_type.inputs)},
            "out_type": {"outputs": list(self.out_type.outputs), "inputs": list(self.out_type.inputs)},
            "matrix": self.matrix,
        }
        if self.certificate is not None:
            rec["certificate"] = io.certificate_record(self.certificate)
        return rec

    @classmethod
    def from_record(cls, rec):
        from . import io

        cert = io.certificate_from_record(rec["certificate"]) if "certificate" in rec else None
        ti, to = rec["in_type"], rec["out_type"]
        return cls(Scenario(ti["outputs"], ti["inputs"]), Scenario(to["outputs"], to["inputs"]), np.asarray(rec["matrix"]), rec["world"], cert)


def identity_connector(scenario):
    return Connector(scenario, scenario, np.eye(scenario.abbreviated_length))


def abbreviated_objective(objective, in_type, out_type, abbreviated=False):
    """Turn a standard objective tensor C into the matrix of <M, .> for the abbreviated M.

    With ``abbreviated=True`` the objective already is that matrix.
    """
    if abbreviated:
        Cab = np.asarray(objective, dtype=float)
        shape = (out_type.abbreviated_length, in_type.abbreviated_length)
        if Cab.shape != shape:
            raise ValueError(f"abbreviated objective has shape {Cab.shape}, expected {shape}")
        return Cab
    data = objective.data if isinstance(objective, Tensor) else np.asarray(objective, dtype=float)
    C = data.reshape(int(np.prod(out_type.leg_dims)), int(np.prod(in_type.leg_dims)))
    return np.asarray(abbreviation_map(out_type).S.T @ (abbreviation_map(in_type).R @ C.T).T)


def _loc_certificate(M, in_type, out_type, p):
    return Certificate(
        "loc-connector",
        {
            "matrix": np.asarray(M),
            "weights": np.asarray(p),
            "in_outputs": list(in_type.outputs),
            "in_inputs": list(in_type.inputs),
            "out_outputs": list(out_type.outputs),
            "out_inputs": list(out_type.inputs),
        },
        tol=1e-7,
    )


def _transloc_lp(Cab, in_type, out_type, M_fixed=None):
    """Variables (vec M, p_ij); M A_i = sum_j p_ij B_j, sum_j p_ij <= 1, p >= 0."""
    A = vertex_matrix(in_type, abbreviated=True)  # N_in x D_in
    B = vertex_matrix(out_type, abbreviated=True)  # N_out x D_out
    N_in, D_in = A.shape
    N_out, D_out = B.shape
    nM = D_out * D_in
    nP = N_in * N_out
    # row (i, r): sum_c M[r, c] A[i, c] - sum_j p[i, j] B[j, r] = 0
    rowsM = sp.kron(sp.csr_matrix(A), sp.eye(D_out), format="csr")  # (i, r) x (c, r)
    # reorder columns so that vec M is row-major (r, c)
    perm = np.arange(nM).reshape(D_in, D_out).T.ravel()
    rowsM = rowsM[:, perm]
    rowsP = -sp.kron(sp.eye(N_in), sp.csr_matrix(B.T), format="csr")
    eq = sp.hstack([rowsM, rowsP]).tocsr()
    cap = sp.hstack([sp.csr_matrix((N_in, nM)), sp.kron(sp.eye(N_in), sp.csr_matrix(np.ones((1, N_out))))]).tocsr()
    Amat = sp.vstack([eq, cap]).tocsr()
    b = np.concatenate([np.zeros(eq.shape[0]), np.ones(N_in)])
    sense = ("=",) * eq.shape[0] + ("<=",) * N_in
    lb = np.concatenate([np.full(nM, -np.inf), np.zeros(nP)])
    ub = np.full(nM + nP, np.inf)
    if M_fixed is not None:
        lb[:nM] = ub[:nM] = np.asarray(M_fixed).ravel()
    c = np.concatenate([np.asarray(Cab).ravel(), np.zeros(nP)])
    return LinearProgram(c, Amat, b, sense, lb, ub), nM, (N_in, N_out)


def _vertex_lp(Cab, in_type, out_type):
    """Single-party output: S_out M a_i >= 0 and a_i[0] - (M a_i)[0] >= 0 for every input vertex."""
    A = vertex_matrix(in_type, abbreviated=True)
    D_in = A.shape[1]
    Sout = abbreviation_map(out_type).S.toarray()
    D_out = Sout.shape[1]
    # (S M a)_k = sum_{r,c} S[k, r] M[r, c] a[c]
    rows = [np.kron(Sout, A)]  # index (k, i) x (r, c)
    norm_row = -np.kron(np.eye(D_out)[:1], A)  # index i x (0, c)
    rows.append(norm_row)
    Amat = np.vstack(rows)
    b = np.concatenate([np.zeros(Sout.shape[0] * A.shape[0]), -A[:, 0]])
    return LinearProgram(np.asarray(Cab).ravel(), Amat, b, ">="), D_out * D_in


def _tie_break(lp, res, nM, in_type, D_out, backend, tol):
    """Among the optimal connectors prefer the one with the largest total output norm on deterministic inputs."""
    A = vertex_matrix(in_type, abbreviated=True)
    sec = np.zeros(lp.c.size)
    sec[: A.shape[1]] = -A.sum(0)  # row 0 of M is the output norm functional
    slack = 1e-10 * (1.0 + abs(res.objective))
    lp2 = LinearProgram(sec, sp.vstack([lp.A, sp.csr_matrix(lp.c[None, :])]), np.r_[lp.b, res.objective + slack], tuple(lp.sense) + ("<=",), lp.lb, lp.ub)
    res2 = solve_lp(lp2, tol=tol, backend=backend)
    return res2 if res2.optimal else res


def optimize_connector(objective, in_type, out_type, method="auto", backend="highs", tol=1e-9, abbreviated=False, tie_break=False):
    """Minimize <W, C> over LOC connectors from ``in_type`` to ``out_type``.

    ``method='transloc'`` imposes that every deterministic input maps to a
    subnormalized local mixture. ``'vertex'`` (single-party outputs only, where
    every no-signalling box is local) imposes entrywise nonnegativity and norm
    non-increase on deterministic inputs. ``'auto'`` picks ``vertex`` when it applies.
    ``tie_break`` re-solves among the optimal connectors for the largest output
    norm, which keeps see-saw iterations away from the zero connector.
    """
    in_type, out_type = _as_scenario(in_type), _as_scenario(out_type)
    Cab = abbreviated_objective(objective, in_type, out_type, abbreviated)
    D_out, D_in = Cab.shape
    if method == "auto":
        method = "vertex" if out_type.m == 1 else "transloc"
    if not np.any(Cab) and not tie_break:
        # every connector is optimal; return the zero connector
        M = np.zeros((D_out, D_in))
        return Connector(in_type, out_type, M, "LOC", loc_certificate(M, in_type, out_type), {"value": 0.0, "lp_value": 0.0, "method": method})
    if method == "vertex":
        if out_type.m != 1:
            raise ValueError("the vertex form needs a single-party output")
        lp, nM = _vertex_lp(Cab, in_type, out_type)
    elif method == "transloc":
        lp, nM, _ = _transloc_lp(Cab, in_type, out_type)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = solve_lp(lp, tol=tol, backend=backend)
    if not res.optimal:
        raise RuntimeError(f"connector LP ended with status {res.status}; W = 0 is always feasible")
    value = res.objective
    if tie_break:
        res = _tie_break(lp, res, nM, in_type, D_out, backend, tol)
    M = res.x[:nM].reshape(D_out, D_in)
    M, cert = certified_matrix(M, in_type, out_type)
    return Connector(in_type, out_type, M, "LOC", cert, {"value": float(Cab.ravel() @ M.ravel()), "lp_value": value, "lp": lp, "result": res, "method": method})


def loc_certificate(M, in_type, out_type):
    """Explicit local decompositions of the images of all deterministic inputs (None if infeasible)."""
    lp, nM, (N_in, N_out) = _transloc_lp(np.zeros_like(M), in_type, out_type, M_fixed=M)
    # prefer the decomposition with the least slack so it is robust to rounding
    res = solve_lp(lp, tol=1e-10, certify=False)
    if not res.optimal:
        return None
    p = np.clip(res.x[nM:], 0.0, None).reshape(N_in, N_out)
    return _loc_certificate(M, in_type, out_type, p)


def interior_connector(in_type, out_type):
    """Sends every input to the uniform output box with half the input's norm."""
    col = np.ones(1)
    for O, I in out_type.parties:
        col = np.kron(col, np.r_[1.0, np.full(I * (O - 1), 1.0 / O)])
    M = np.zeros((out_type.abbreviated_length, in_type.abbreviated_length))
    M[:, 0] = 0.5 * col
    return M


def certified_matrix(M, in_type, out_type):
    """(M, certificate); if rounding left M just outside the set it is mixed with the interior connector."""
    cert = loc_certificate(M, in_type, out_type)
    if cert is None:
        M_int = interior_connector(in_type, out_type)
        for delta in (1e-10, 1e-9, 1e-8, 1e-7, 1e-6):
            M2 = (1 - delta) * M + delta * M_int
            cert = loc_certificate(M2, in_type, out_type)
            if cert is not None:
                return M2, cert
    return M, cert


def _verify_loc_connector(cert, context=None):
    pl = cert.payload
    in_type = Scenario(pl["in_outputs"], pl["in_inputs"])
    out_type = Scenario(pl["out_outputs"], pl["out_inputs"])
    M = np.asarray(pl["matrix"], dtype=float)
    if context is not None and isinstance(context, Connector):
        if context.matrix.shape != M.shape or np.abs(context.matrix - M).max() > 1e-12:
            return Verification(False, {"matrix_mismatch": float("inf")}, cert.kind)
    p = np.asarray(pl["weights"], dtype=float)
    A = vertex_matrix(in_type, abbreviated=True)
    B = vertex_matrix(out_type, abbreviated=True)
    res = {
        "negative_weight": float(max(-p.min(initial=0.0), 0.0)),
        "excess_mass": float(max((p.sum(axis=1) - 1.0).max(initial=0.0), 0.0)),
        "decomposition": float(np.abs(A @ M.T - p @ B).max()),
    }
    return Verification(res["negative_weight"] <= 1e-10 and res["excess_mass"] <= 1e-9 and res["decomposition"] <= cert.tol, res, cert.kind)


def certify_connector(conn):
    """Attach a LOC feasibility certificate to a connector, or raise if it is not LOC-feasible."""
    cert = loc_certificate(conn.matrix, conn.in_type, conn.out_type)
    if cert is None:
        raise ValueError("connector maps some deterministic box outside the local set")
    return Connector(conn.in_type, conn.out_type, conn.matrix, "LOC", cert, conn.info)


# ------------------------------------------------------------ fast 2 -> 1
class ExtendedBox:
    """Party A with (d_A, n_A) plus n_B single-input parties with d_B outputs each."""

    def __init__(self, d_A, n_A, d_B, n_B):
        self.d_A, self.n_A, self.d_B, self.n_B = d_A, n_A, d_B, n_B
        self.scenario = Scenario([d_A] + [d_B] * n_B, [n_A] + [1] * n_B)
        self.base = Scenario([d_A, d_B], [n_A, n_B])
        self.S = abbreviation_map(self.scenario).S
        D_A = n_A * (d_A - 1) + 1
        D_B = n_B * (d_B - 1) + 1
        D_ext = self.scenario.abbreviated_length
        # placement of base coordinates (A, B) into extended coordinates
        ext_of_B = np.zeros(D_B, dtype=int)
        for b in range(d_B - 1):
            for y in range(n_B):
                digits = [0] * n_B
                digits[y] = 1 + b
                ext_of_B[1 + b * n_B + y] = int(np.ravel_multi_index(digits, [d_B] * n_B)) if n_B else 0
        rows = (np.arange(D_A)[:, None] * d_B**n_B + ext_of_B[None, :]).ravel()
        self.place = sp.csr_matrix((np.ones(D_A * D_B), (rows, np.arange(D_A * D_B))), shape=(D_ext, D_A * D_B))

    def residual(self, c, u):
        return np.asarray(self.S.T @ c - self.place @ u).ravel()


def positive_functional_certificate(u, d_A, n_A, d_B, n_B, tol=1e-10):
    """c >= 0 showing that the abbreviated functional ``u`` is nonnegative on local boxes, or None."""
    ext = ExtendedBox(d_A, n_A, d_B, n_B)
    n = ext.S.shape[0]
    lp = LinearProgram(np.zeros(n), ext.S.T, ext.place @ np.asarray(u, float).ravel(), "=", lb=np.zeros(n))
    res = solve_lp(lp, tol=tol, certify=False)
    if not res.optimal:
        return None
    return _pf_certificate(np.clip(res.x, 0.0, None), u, ext)


def _pf_certificate(c, u, ext):
    return Certificate(
        "positive-functional",
        {"c": np.asarray(c), "functional": np.asarray(u, float).ravel(), "d_A": ext.d_A, "n_A": ext.n_A, "d_B": ext.d_B, "n_B": ext.n_B},
        tol=1e-8,
    )


def _verify_positive_functional(cert, context=None):
    pl = cert.payload
    ext = ExtendedBox(int(pl["d_A"]), int(pl["n_A"]), int(pl["d_B"]), int(pl["n_B"]))
    c = np.asarray(pl["c"], dtype=float)
    u = np.asarray(pl["functional"], dtype=float)
    res = {"negative_multiplier": float(max(-c.min(initial=0.0), 0.0)), "reconstruction": float(np.abs(ext.residual(c, u)).max(initial=0.0))}
    return Verification(res["negative_multiplier"] <= 1e-10 and res["reconstruction"] <= cert.tol, res, cert.kind)


def _output_functionals(out_type):
    """Rows F (k x D_out) and offsets e (k): the output positivity conditions are F M + e (x) e_0 >= 0."""
    S = abbreviation_map(out_type).S.toarray()
    D = S.shape[1]
    E = np.zeros((1, D))
    E[0, 0] = -1.0
    F = np.vstack([S, E])
    off = np.zeros(F.shape[0])
    off[-1] = 1.0
    return F, off


def optimize_2to1_fast(objective, n_A, n_B, d_A, d_B, out_type, backend="highs", tol=1e-9, abbreviated=False):
    """2 -> 1 connector optimization through extended-box multipliers.

    Every output positivity functional u_r (standard output rows and E - w0)
    is written as S_ext^T c_r with c_r >= 0, vanishing on extended
    coordinates where two or more B parties are measured.
    """
    out_type = _as_scenario(out_type)
    if out_type.m != 1:
        raise ValueError("optimize_2to1_fast needs a single-party output")
    in_type = Scenario([d_A, d_B], [n_A, n_B])
    ext = ExtendedBox(d_A, n_A, d_B, n_B)
    Cab = abbreviated_objective(objective, in_type, out_type, abbreviated)
    D_out, D_in = Cab.shape
    if not np.any(Cab):
        M = np.zeros((D_out, D_in))
        return Connector(in_type, out_type, M, "LOC", loc_certificate(M, in_type, out_type), {"value": 0.0, "method": "extended"})
    F, off = _output_functionals(out_type)
    k = F.shape[0]
    nM = D_out * D_in
    St = sp.csr_matrix(ext.S.T)
    n_c = St.shape[1]
    # u_r = sum_j F[r, j] M[j, :] + off[r] e_0 ;  S^T c_r - place u_r = 0
    blocks_M = sp.kron(sp.csr_matrix(F), sp.eye(D_in), format="csr")  # (r, col) x (j, col)
    eq_M = -sp.block_diag([ext.place] * k, format="csr") @ blocks_M
    eq_c = sp.block_diag([St] * k, format="csr")
    Aeq = sp.hstack([eq_M, eq_c]).tocsr()
    e0 = np.zeros(D_in)
    e0[0] = 1.0
    b = np.concatenate([ext.place @ (off[r] * e0) for r in range(k)])
    c = np.concatenate([Cab.ravel(), np.zeros(k * n_c)])
    lb = np.concatenate([np.full(nM, -np.inf), np.zeros(k * n_c)])
    lp = LinearProgram(c, Aeq, b, "=", lb=lb)
    res = solve_lp(lp, tol=tol, backend=backend)
    if not res.optimal:
        raise RuntimeError(f"fast 2->1 LP ended with status {res.status}")
    M = res.x[:nM].reshape(D_out, D_in)
    cs = np.clip(res.x[nM:], 0.0, None).reshape(k, n_c)
    cert = Certificate(
        "positive-functionals",
        {"matrix": M, "c": cs, "d_A": d_A, "n_A": n_A, "d_B": d_B, "n_B": n_B, "out_outputs": list(out_type.outputs), "out_inputs": list(out_type.inputs)},
        tol=1e-8,
    )
    return Connector(in_type, out_type, M, "LOC", cert, {"value": res.objective, "lp": lp, "result": res, "method": "extended"})


def _verify_positive_functionals(cert, context=None):
    pl = cert.payload
    M = np.asarray(pl["matrix"], dtype=float)
    if context is not None and isinstance(context, Connector):
        if context.matrix.shape != M.shape or np.abs(context.matrix - M).max() > 1e-12:
            return Verification(False, {"matrix_mismatch": float("inf")}, cert.kind)
    ext = ExtendedBox(int(pl["d_A"]), int(pl["n_A"]), int(pl["d_B"]), int(pl["n_B"]))
    out_type = Scenario(pl["out_outputs"], pl["out_inputs"])
    F, off = _output_functionals(out_type)
    cs = np.asarray(pl["c"], dtype=float)
    e0 = np.zeros(M.shape[1])
    e0[0] = 1.0
    worst = 0.0
    for r in range(F.shape[0]):
        u = F[r] @ M + off[r] * e0
        worst = max(worst, float(np.abs(ext.residual(cs[r], u)).max()))
    res = {"negative_multiplier": float(max(-cs.min(initial=0.0), 0.0)), "reconstruction": worst}
    return Verification(res["negative_multiplier"] <= 1e-10 and res["reconstruction"] <= cert.tol, res, cert.kind)


# ------------------------------------------------------------ wirings
@dataclass(frozen=True)
class Route:
    """Input of party ``party``: ``fn(y, dep_outputs)`` with y the owning output party's input."""

    party: int
    owner: int
    deps: tuple
    fn: object


@dataclass(frozen=True)
class Emit:
    """Output of output party ``owner``: ``fn(y, outputs_of_parties)``."""

    owner: int
    parties: tuple
    fn: object


def wiring(in_type, out_type, routes, emits):
    """Deterministic connector from a routing program.

    W[(b, y), (a, x)] = prod_j delta(b_j, emit_j(y_j, a)) * prod_k delta(x_k, route_k(y_owner, a_deps)).
    """
    in_type, out_type = _as_scenario(in_type), _as_scenario(out_type)
    routes = {r.party: r for r in routes}
    if sorted(routes) != list(range(in_type.m)):
        raise ValueError("every input party needs exactly one route")
    ts = graphlib.TopologicalSorter({k: set(r.deps) for k, r in routes.items()})
    try:
        tuple(ts.static_order())
    except graphlib.CycleError as exc:
        raise StructureError(f"cyclic routing {exc.args[1]}") from None
    emits = {e.owner: e for e in emits}
    if sorted(emits) != list(range(out_type.m)):
        raise ValueError("every output party needs exactly one emit rule")
    for r in routes.values():
        if any(routes[d].owner != r.owner for d in r.deps):
            raise ValueError(f"party {r.party} depends on parties owned by another output party")
    Lout, Lin = int(np.prod(out_type.leg_dims)), int(np.prod(in_type.leg_dims))
    W = np.zeros(out_type.leg_dims + in_type.leg_dims)
    for ys in itertools.product(*[range(I) for I in out_type.inputs]):
        for a in itertools.product(*[range(O) for O in in_type.outputs]):
            x = [routes[k].fn(ys[routes[k].owner], tuple(a[d] for d in routes[k].deps)) for k in range(in_type.m)]
            b = [emits[j].fn(ys[j], tuple(a[p] for p in emits[j].parties)) for j in range(out_type.m)]
            out_idx = tuple(bj * out_type.inputs[j] + ys[j] for j, bj in enumerate(b))
            in_idx = tuple(ak * in_type.inputs[k] + int(x[k]) for k, ak in enumerate(a))
            W[out_idx + in_idx] = 1.0
    return Connector.from_standard(in_type, out_type, W.reshape(Lout, Lin), info={"wiring": True})


def sequential_wiring():
    """2 -> 1 wiring: party 1 gets y, party 2 gets party 1's output, the result is party 2's output."""
    return wiring(
        Scenario([2, 2], [2, 2]),
        Scenario([2], [2]),
        [Route(0, 0, (), lambda y, _: y), Route(1, 0, (0,), lambda y, a: a[0])],
        [Emit(0, (1,), lambda y, a: a[0])],
    )


# ------------------------------------------------------------ CHSH forms
def _d(i, j):
    return 1.0 if i == j else 0.0


def _chsh_entry(a, x, b, y):
    return -_d(a, 0) * _d(b, 0) * (_d(x, 0) * _d(y, 0) + _d(x, 1) * _d(y, 0) + _d(x, 0) * _d(y, 1) - _d(x, 1) * _d(y, 1)) + _d(x, 0) * _d(y, 0) * (
        _d(a, 0) + _d(b, 0)
    )


def _chsh_prime_entry(a, x, b, y):
    return -_d(a, 0) * _d(b, 0) * (-_d(x, 0) * _d(y, 0) + _d(x, 1) * _d(y, 0) + _d(x, 0) * _d(y, 1) + _d(x, 1) * _d(y, 1)) + _d(x, 1) * _d(y, 1) * (
        _d(a, 0) + _d(b, 0)
    )


def _as_tensor(f):
    T = np.zeros((4, 4))
    for a, x, b, y in itertools.product(range(2), repeat=4):
        T[2 * a + x, 2 * b + y] = f(a, x, b, y)
    return T


def chsh_form():
    """Normalized CHSH functional on (2,2;2,2) boxes, doubled-leg tensor (4 x 4); local range [0, 1]."""
    return _as_tensor(_chsh_entry)


def chsh_prime_form():
    return _as_tensor(_chsh_prime_entry)


def chsh_second_form():
    """The CHSH form with the first party's inputs exchanged; its minimum over qubit pairs is 1/2 - 1/sqrt(2)."""
    return _as_tensor(lambda a, x, b, y: _chsh_entry(a, 1 - x, b, y))


def unit_effect_tensor(scenario):
    return unit_effect(scenario)


def chsh_connector():
    """Deterministic (2,2;2,2) -> (2;2) connector with rows C, E - C, C', E - C'."""
    C, Cp = chsh_form(), chsh_prime_form()
    E = unit_effect(Scenario([2, 2], [2, 2]))
    W = np.zeros((4, 16))
    W[0] = C.ravel()  # (b, y) = (0, 0)
    W[2] = (E - C).ravel()  # (1, 0)
    W[1] = Cp.ravel()  # (0, 1)
    W[3] = (E - Cp).ravel()  # (1, 1)
    conn = Connector.from_standard(Scenario([2, 2], [2, 2]), Scenario([2], [2]), W)
    return certify_connector(conn)


# ------------------------------------------------------------ CHSH trees
@dataclass
class ConnectorNetwork:
    """Contraction graph whose open incoming legs ``box_legs`` (in party order) receive a box."""

    graph: ContractionGraph
    box_legs: list
    scenario: Scenario
    symmetries: list = field(default_factory=list)
    root_input: tuple = ()

    def functional(self, guard=DENSE_GUARD):
        """Dense standard functional over the box parties."""
        size = int(np.prod(self.scenario.leg_dims, dtype=object))
        if size > guard:
            raise GuardError(f"dense functional needs {size} entries, guard is {guard}")
        T = contract(self.graph)
        labels = [f"{n}:{l}" for n, l in self.box_legs]
        return T.permuted(labels).data

    def evaluate(self, box):
        return float(np.sum(self.functional() * box.standard().data))

    def to_record(self):
        return {
            "type": "network",
            "nodes": [{"name": n, "legs": [list(l) for l in t.legs], "data": t.data} for n, t in self.graph.nodes.items()],
            "edges": [[list(a), list(b)] for a, b in self.graph.edges],
            "box_legs": [list(l) for l in self.box_legs],
            "outputs": list(self.scenario.outputs),
            "inputs": list(self.scenario.inputs),
            "root_input": list(self.root_input),
        }


def chsh_tree(depth, root_output=0, root_input=0):
    """Binary tree of CHSH connectors; the root's output leg is fixed to (root_output, root_input)."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    K = chsh_connector().tensor()
    g = ContractionGraph()
    root = np.zeros(4)
    root[2 * root_output + root_input] = 1.0
    g.add("root", Tensor(root, [("i", IN)]))
    leaves = []

    def build(name, level):
        g.add(name, K)
        if level == depth:
            leaves.extend([(name, "i0"), (name, "i1")])
            return
        for k in (0, 1):
            child = f"{name}{k}"
            build(child, level + 1)
            g.connect((child, "o0"), (name, f"i{k}"))

    build("n", 1)
    g.connect(("n", "o0"), ("root", "i"))
    m = 2**depth
    return ConnectorNetwork(g, leaves, Scenario.uniform(m), tree_symmetries(depth), (root_output, root_input))


def tree_symmetries(depth):
    """Generators of the tree automorphism group as party permutations (subtree swaps)."""
    m = 2**depth
    gens = []

    def rec(lo, hi):
        if hi - lo < 2:
            return
        mid = (lo + hi) // 2
        p = list(range(m))
        p[lo:hi] = list(range(mid, hi)) + list(range(lo, mid))
        gens.append(p)
        rec(lo, mid)
        rec(mid, hi)

    rec(0, m)
    return gens


def _orbits(n_levels, m, gens):
    """Orbit labels of {0..n_levels-1}^m under party permutations."""
    N = n_levels**m
    digits = np.array(np.unravel_index(np.arange(N), (n_levels,) * m)).T
    maps = [np.ravel_multi_index(digits[:, g].T, (n_levels,) * m) for g in gens]
    lab = np.arange(N)
    while True:
        new = lab.copy()
        for mp in maps:
            new = np.minimum(new, new[mp])
            tmp = new.copy()
            np.minimum.at(tmp, mp, new)
            new = tmp
        if np.array_equal(new, lab):
            break
        lab = new
    _, inv = np.unique(lab, return_inverse=True)
    return inv


def _invariant(w, shape, gens):
    T = w.reshape(shape)
    return all(np.allclose(T.transpose(g), T, atol=1e-12) for g in gens)


def ns_min_value(network, symmetric=True, backend="highs"):
    """Minimum of the network functional over normalized no-signalling boxes.

    With ``symmetric`` and a network invariant under its listed party
    permutations, the LP is solved over orbit sums and the dual is lifted back
    to the full space (spreading each orbit's multiplier uniformly), so the
    certificate refers to the unreduced problem.
    """
    sc = network.scenario
    w = network.functional().ravel()
    amap = abbreviation_map(sc)
    S = amap.S
    c = np.asarray(S.T @ w).ravel()
    D = S.shape[1]
    gens = network.symmetries if symmetric else []
    if gens and not (len(set(sc.parties)) == 1 and _invariant(w, sc.leg_dims, gens)):
        gens = []
    if gens:
        m = sc.m
        orb_q = _orbits(sc.abbreviated_dims[0], m, gens)
        orb_s = _orbits(sc.leg_dims[0], m, gens)
        nq = orb_q.max() + 1
        B = sp.csr_matrix((np.ones(D), (np.arange(D), orb_q)), shape=(D, nq))
        reps = np.unique(orb_s, return_index=True)[1]
        A = (S[reps] @ B).tocsr()
        cr = np.asarray(B.T @ c).ravel()
    else:
        B = sp.eye(D, format="csr")
        A = S
        cr = c
    e = np.zeros(B.shape[1])
    e[np.asarray(B[0].todense()).ravel().argmax()] = 1.0
    lp = LinearProgram(cr, sp.vstack([A, sp.csr_matrix(e)]).tocsr(), np.concatenate([np.zeros(A.shape[0]), [1.0]]), (">=",) * A.shape[0] + ("=",))
    res = solve_lp(lp, tol=1e-10, backend=backend)
    if not res.optimal:
        raise RuntimeError(f"no-signalling LP ended with status {res.status}")
    y = res.dual["y"]
    q = np.asarray(B @ res.x).ravel()
    if gens:
        counts = np.bincount(orb_s)
        lam = np.clip(y[:-1], 0.0, None)[orb_s] / counts[orb_s]
    else:
        lam = np.clip(y[:-1], 0.0, None)
    cert = Certificate(
        "ns-bound",
        {"functional": w, "q": q, "lam": lam, "value": float(y[-1]), "outputs": list(sc.outputs), "inputs": list(sc.inputs)},
        tol=1e-7,
    )
    return NsBound(float(res.objective), q, cert, {"lp": lp, "reduced": bool(gens)})


@dataclass
class NsBound:
    value: float
    box: np.ndarray
    certificate: Certificate
    info: dict


def _verify_ns_bound(cert, context=None):
    """Primal: q is a normalized NS box attaining the value. Dual: S^T lam + v e_0 = S^T w with lam >= 0."""
    pl = cert.payload
    sc = Scenario(pl["outputs"], pl["inputs"])
    S = abbreviation_map(sc).S
    w = np.asarray(pl["functional"], dtype=float).ravel()
    q = np.asarray(pl["q"], dtype=float)
    lam = np.asarray(pl["lam"], dtype=float)
    v = float(pl["value"])
    c = np.asarray(S.T @ w).ravel()
    stat = np.asarray(S.T @ lam).ravel() - c
    stat[0] += v
    res = {
        "primal_negativity": float(max(-(S @ q).min(), 0.0)),
        "primal_normalization": abs(q[0] - 1.0),
        "dual_sign": float(max(-lam.min(initial=0.0), 0.0)),
        "stationarity": float(np.abs(stat).max()),
        "gap": abs(float(c @ q) - v),
    }
    return Verification(all(r <= cert.tol for r in res.values()), res, cert.kind)


# ------------------------------------------------------------ fixed 2 -> 2 example
_NON_WIRING = [
    [1, 0, 0, 0, 0, 0, 0, 0, 0],
    [1 / 4, 0, 0, 1 / 4, 1 / 2, -1 / 4, 1 / 2, -1 / 2, 1 / 4],
    [1 / 2, -1 / 4, 1 / 2, 1 / 2, -1 / 4, -1 / 2, 0, 1 / 4, -3 / 4],
    [3 / 4, -1 / 2, 0, 1 / 4, 1 / 2, -1 / 4, -1 / 2, 1 / 4, 1 / 2],
    [1 / 4, 0, -1 / 4, 1 / 4, 1 / 2, -1 / 4, 0, -1 / 4, 3 / 4],
    [1 / 2, -1 / 2, 1 / 4, 1 / 2, 0, -1 / 2, -1 / 2, 1 / 2, -1 / 4],
    [3 / 4, 0, 0, -1 / 4, -1 / 2, 1 / 2, -1 / 4, 1 / 4, 1 / 4],
    [1 / 4, 0, -1 / 4, -1 / 4, 0, 1 / 2, 1 / 4, -1 / 4, 1 / 2],
    [1 / 4, 0, 1 / 2, 1 / 4, -1 / 2, 0, -1 / 4, 1 / 4, -1 / 2],
]


def non_wiring_connector(certify=True):
    """A (2,2;2,2) -> (2,2;2,2) LOC connector that is not a wiring (abbreviated matrix)."""
    sc = Scenario([2, 2], [2, 2])
    conn = Connector(sc, sc, np.array(_NON_WIRING, dtype=float))
    return certify_connector(conn) if certify else conn


register_verifier("local-model", _verify_local_model)
register_verifier("bell-functional", _verify_bell_functional)
register_verifier("loc-connector", _verify_loc_connector)
register_verifier("positive-functional", _verify_positive_functional)
register_verifier("positive-functionals", _verify_positive_functionals)
register_verifier("ns-bound", _verify_ns_bound)
