"""Matrix product connector networks: evaluation, see-saw, projected gradient, warm starts.

A chain on m sites holds m - 1 connectors. Connector 0 reads sites 0 and 1,
connector j > 0 reads the bond output of connector j - 1 and site j + 1, and
the last connector has a trivial (one-outcome, one-input) output, so the
network is a scalar functional W(P). Everything runs on coefficient vectors:
abbreviated box coordinates for LOC and QUANT, Hermitian-basis coefficients
``r_mu = tr(rho G_mu)`` for SEP. Site tensors have shape (D_left, c, D_right).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box, PauliMPS, Scenario
from .conic import Model, block
from .loc import Connector, abbreviation_map, certified_matrix, optimize_connector, party_R, vertex_matrix
from .mps import MPSBox, dense_to_mps
from .tensor import StructureError

DETECT = 1e-6
STALL_REL = 1e-7
STALL_SWEEPS = 3
MAX_SWEEPS = 200
BLOWUP = 1e6
ZERO = 1e-9


# ------------------------------------------------------------ worlds
class LocWorld:
    name = "LOC"

    def bond_type(self, bond):
        n_I, n_O = bond
        return Scenario([n_O], [n_I])

    def terminal(self):
        return Scenario([1], [1])

    def combine(self, a, b):
        return a + b

    def length(self, t):
        return t.abbreviated_length

    def optimize(self, C, in_type, out_type):
        return optimize_connector(C, in_type, out_type, abbreviated=True, tie_break=True)

    def feasible(self, model, in_type, out_type):
        """Matrix expression constrained to the LOC connector set (single-party output)."""
        A = vertex_matrix(in_type, abbreviated=True)
        S = abbreviation_map(out_type).S.toarray()
        D_out, D_in = out_type.abbreviated_length, in_type.abbreviated_length
        M = model.var((D_out, D_in))
        v = M.reshape(D_out * D_in)
        model.ge(v.linear(np.kron(S, A)), 0.0)
        model.ge(-v.linear(np.kron(np.eye(D_out)[:1], A)), -A[:, 0])
        return M

    def certify(self, M, in_type, out_type):
        M, cert = certified_matrix(np.asarray(M, dtype=float), in_type, out_type)
        return Connector(in_type, out_type, M, "LOC", cert)


class QuantWorld(LocWorld):
    name = "QUANT"

    def __init__(self, level="1+AB"):
        self.level = level

    def optimize(self, C, in_type, out_type):
        from .quant import optimize_quantum_connector

        return optimize_quantum_connector(C, in_type, out_type, level=self.level, abbreviated=True)

    def feasible(self, model, in_type, out_type):
        from .quant import connector_constraints

        M = model.var((out_type.abbreviated_length, in_type.abbreviated_length))
        connector_constraints(model, M, in_type, out_type, self.level)
        return M

    def certify(self, M, in_type, out_type):
        from .quant import certify_quantum_matrix

        return certify_quantum_matrix(M, in_type, out_type, self.level)


class SepWorld:
    """Types are tuples of local dimensions; the bond is one system of dimension ``bond``."""

    name = "SEP"

    def __init__(self, k=1):
        self.k = k

    def bond_type(self, bond):
        return (int(bond),)

    def terminal(self):
        return (1,)

    def combine(self, a, b):
        return tuple(a) + tuple(b)

    def length(self, t):
        return int(np.prod(t)) ** 2

    def optimize(self, C, in_type, out_type):
        from .sep import coefficient_objective, optimize_sep_connector

        return optimize_sep_connector(coefficient_objective(C, in_type, out_type), in_type, out_type, k=self.k)

    def feasible(self, model, in_type, out_type):
        raise NotImplementedError("projection is offered for LOC and QUANT networks")

    def certify(self, M, in_type, out_type):
        raise NotImplementedError


def world_for(name, **kw):
    name = name.upper()
    if name == "LOC":
        return LocWorld()
    if name == "QUANT":
        return QuantWorld(kw.get("level", "1+AB"))
    if name == "SEP":
        return SepWorld(kw.get("k", 1))
    raise ValueError(f"unknown world {name!r}")


# ------------------------------------------------------------ sites
def box_sites(box):
    """Abbreviated-coordinate site tensors of an MPS-backed or dense no-signalling box."""
    if isinstance(box, Box):
        box = dense_to_mps(box)
    if not isinstance(box, MPSBox):
        raise TypeError("expected an MPSBox or a Box")
    out = []
    for s, O, I in zip(box.sites, box.scenario.outputs, box.scenario.inputs):
        R = party_R(O, I)
        R = R.toarray() if hasattr(R, "toarray") else np.asarray(R)
        out.append(np.einsum("cy,lyr->lcr", R, s))
    return out, [Scenario([O], [I]) for O, I in zip(box.scenario.outputs, box.scenario.inputs)]


def _pauli_tensor_sites(r, rtol=1e-13):
    n = r.ndim
    rest = r.reshape(1, -1)
    sites = []
    for _ in range(n - 1):
        D = rest.shape[0]
        mat = rest.reshape(D * 4, -1)
        U, s, Vt = np.linalg.svd(mat, full_matrices=False)
        keep = max(1, int(np.sum(s > rtol * max(s[0], 1e-300))))
        sites.append(U[:, :keep].reshape(D, 4, keep))
        rest = s[:keep, None] * Vt[:keep]
    sites.append(rest.reshape(rest.shape[0], 4, 1))
    return sites


def state_sites(state, n=None):
    """Coefficient site tensors of a qubit state given densely or as a PauliMPS."""
    if isinstance(state, PauliMPS):
        sites = state.sites
    else:
        rho = np.asarray(state, dtype=complex)
        n = int(round(np.log2(rho.shape[0]))) if n is None else n
        sites = _pauli_tensor_sites(pauli_coefficients(rho, n))
    return [np.asarray(s, dtype=float) for s in sites], [(2,)] * len(sites)


def pauli_coefficients(rho, n):
    """Tensor r[mu_1..mu_n] = tr(rho sigma_mu_1 (x) .. (x) sigma_mu_n) of an n-qubit operator."""
    from .linalg import hermitian_basis

    P = np.array(hermitian_basis(2))  # P[mu, i, j]
    T = np.asarray(rho, dtype=complex).reshape([2] * (2 * n))
    # after k steps the axes are (mu_0..mu_{k-1}, i_k..i_{n-1}, j_k..j_{n-1})
    for k in range(n):
        T = np.tensordot(T, P, axes=([k, n], [2, 1]))
        T = np.moveaxis(T, -1, k)
    return np.real(T)


# ------------------------------------------------------------ networks
@dataclass
class Mpctn:
    world: str
    site_types: list
    bond: tuple
    connectors: list
    world_opts: dict = field(default_factory=dict)

    @property
    def m(self):
        return len(self.site_types)

    def engine(self):
        return world_for(self.world, **self.world_opts)

    def types(self, j):
        """(input type, output type) of connector j."""
        w = self.engine()
        bt = w.bond_type(self.bond)
        left = self.site_types[0] if j == 0 else bt
        in_t = w.combine(left, self.site_types[j + 1])
        out_t = w.terminal() if j == self.m - 2 else bt
        return in_t, out_t

    def check(self):
        if self.m < 2:
            raise StructureError("a network needs at least two sites")
        if len(self.connectors) != self.m - 1:
            raise StructureError(f"{len(self.connectors)} connectors for {self.m} sites")
        w = self.engine()
        for j, c in enumerate(self.connectors):
            in_t, out_t = self.types(j)
            shape = (w.length(out_t), w.length(in_t))
            if np.shape(c.matrix) != shape:
                raise StructureError(f"link {j}: connector has shape {np.shape(c.matrix)}, expected {shape} for {in_t} -> {out_t}")

    def matrices(self):
        return [np.asarray(c.matrix, dtype=float) for c in self.connectors]

    def to_record(self):
        recs = [c.to_record() for c in self.connectors]
        if self.world == "SEP":
            types = [list(t) for t in self.site_types]
        else:
            types = [{"outputs": list(t.outputs), "inputs": list(t.inputs)} for t in self.site_types]
        return {
            "type": "mpctn",
            "world": self.world,
            "bond": list(self.bond) if isinstance(self.bond, tuple) else self.bond,
            "m": self.m,
            "site_types": types,
            "world_opts": dict(self.world_opts),
            "connectors": recs,
        }

    @staticmethod
    def from_record(rec):
        world = rec["world"]
        if world == "SEP":
            from .sep import SepConnector

            types = [tuple(t) for t in rec["site_types"]]
            conns = [SepConnector.from_record(c) for c in rec["connectors"]]
        else:
            types = [Scenario(t["outputs"], t["inputs"]) for t in rec["site_types"]]
            conns = [Connector.from_record(c) for c in rec["connectors"]]
        bond = tuple(rec["bond"]) if isinstance(rec["bond"], list) else rec["bond"]
        return Mpctn(world, types, bond, conns, dict(rec.get("world_opts", {})))


def _check_sites(net, sites, types):
    if len(sites) != net.m:
        raise StructureError(f"box has {len(sites)} sites, network expects {net.m}")
    w = net.engine()
    for k, (s, t) in enumerate(zip(sites, types)):
        if s.shape[1] != w.length(net.site_types[k]):
            raise StructureError(f"site {k}: box type {t} does not match network type {net.site_types[k]}")


def prepare(net, box):
    """Coefficient site tensors of ``box`` for the network's world."""
    if net.world == "SEP":
        sites, types = state_sites(box)
    elif isinstance(box, tuple) and len(box) == 2 and isinstance(box[0], list):
        sites, types = box
    else:
        sites, types = box_sites(box)
    _check_sites(net, sites, types)
    return sites


def _chain(Ms, sites):
    """Left-to-right contraction; returns the list of connector inputs L_j (D_in, Dr) and the value."""
    s0, s1 = sites[0], sites[1]
    L = np.einsum("lar,rbs->labs", s0, s1)[0].reshape(s0.shape[1] * s1.shape[1], s1.shape[2])
    Ls = [L]
    v = Ms[0] @ L
    for j in range(1, len(Ms)):
        s = sites[j + 1]
        L = np.einsum("pr,rzs->pzs", v, s).reshape(v.shape[0] * s.shape[1], s.shape[2])
        Ls.append(L)
        v = Ms[j] @ L
    return Ls, float(v[0, 0])


def evaluate(net, box, sites=None):
    """W(P); linear in the number of sites for MPS-backed boxes."""
    net.check()
    sites = prepare(net, box) if sites is None else sites
    return _chain(net.matrices(), sites)[1]


def environments(Ms, sites):
    """E_j with W(P) = <E_j, M_j> for every connector j, plus the value."""
    Ls, val = _chain(Ms, sites)
    n = len(Ms)
    Rs = [None] * n
    Rs[-1] = np.ones((1, 1))
    for j in range(n - 1, 0, -1):
        s = sites[j + 1]
        Dp = Ms[j - 1].shape[0]
        Mj = Ms[j].reshape(Ms[j].shape[0], Dp, s.shape[1])
        Rs[j - 1] = np.einsum("opz,rzs,os->pr", Mj, s, Rs[j])
    return [Rs[j] @ Ls[j].T for j in range(n)], val


# ------------------------------------------------------------ construction
def random_network(world, site_types, bond, rng, **world_opts):
    """Connectors optimized for Gaussian random objectives (extreme points of the connector set)."""
    net = Mpctn(world, list(site_types), tuple(bond) if not np.isscalar(bond) else bond, [], dict(world_opts))
    w = net.engine()
    for j in range(net.m - 1):
        in_t, out_t = net.types(j)
        net.connectors.append(w.optimize(rng.normal(size=(w.length(out_t), w.length(in_t))), in_t, out_t))
    return net


def network_for(box, world="LOC", bond=(2, 2), seed=0, **world_opts):
    rng = np.random.default_rng(seed)
    if world.upper() == "SEP":
        _, types = state_sites(box)
    else:
        _, types = box_sites(box)
    return random_network(world.upper(), types, bond, rng, **world_opts)


# ------------------------------------------------------------ see-saw
@dataclass
class OptimizationTrace:
    records: list = field(default_factory=list)
    sweep_values: list = field(default_factory=list)
    status: str = "running"
    seed: int | None = None
    wall_time: float = 0.0
    events: list = field(default_factory=list)

    @property
    def values(self):
        return [r["value"] for r in self.records]

    @property
    def final(self):
        return self.records[-1]["value"] if self.records else None

    def monotone(self, tol=1e-9):
        """Values never increase except at recorded restarts (zero-connector reseeds)."""
        prev = None
        for r in self.records:
            if prev is not None and not r.get("restart") and r["value"] > prev + tol:
                return False
            prev = r["value"]
        return True

    def to_record(self):
        keep = ("sweep", "site", "value", "status", "wall_ms", "restart")
        return {
            "status": self.status,
            "seed": self.seed,
            "sweep_values": list(self.sweep_values),
            "records": [{k: r[k] for k in keep if k in r} for r in self.records],
            "events": list(self.events),
        }


def _is_zero(M):
    return float(np.abs(M).max(initial=0.0)) < ZERO


def see_saw(net, box, max_sweeps=MAX_SWEEPS, threshold=DETECT, seed=0, alternate=True, stop_on_negative=True, on_sweep=None):
    """Block-coordinate descent: each step replaces one connector by the optimum of its linear subproblem.

    Sweeps run left to right, then right to left when ``alternate``. Stops on
    detection (value < -threshold), on a stall (relative improvement below
    1e-7 over three sweeps), on a failed subproblem ("solver-stall", partial
    trace kept) or after ``max_sweeps``. A connector that comes
    back as zero is reseeded randomly once per sweep before a stall is declared.
    """
    rng = np.random.default_rng(seed)
    net.check()
    sites = prepare(net, box)
    w = net.engine()
    trace = OptimizationTrace(seed=seed)
    t0 = time.perf_counter()
    n = net.m - 1
    Ms = net.matrices()
    value = _chain(Ms, sites)[1]
    trace.records.append({"sweep": 0, "site": None, "value": value, "status": "initial", "wall_ms": 0.0})
    for sweep in range(1, max_sweeps + 1):
        order = list(range(n)) if not alternate or sweep % 2 == 1 else list(range(n - 1, -1, -1))
        reseeded = False
        for j in order:
            ts = time.perf_counter()
            E, _ = environments(Ms, sites)
            in_t, out_t = net.types(j)
            try:
                conn = w.optimize(E[j], in_t, out_t)
            except RuntimeError as exc:
                trace.status = "solver-stall"
                trace.events.append({"sweep": sweep, "site": j, "error": str(exc)})
                trace.wall_time = time.perf_counter() - t0
                return net, trace
            restart = False
            if _is_zero(conn.matrix) and not reseeded and value >= -threshold:
                conn = w.optimize(rng.normal(size=E[j].shape), in_t, out_t)
                trace.events.append({"sweep": sweep, "site": j, "event": "reseed"})
                reseeded = restart = True
            net.connectors[j] = conn
            Ms[j] = np.asarray(conn.matrix, dtype=float)
            big = float(np.abs(Ms[j]).max(initial=0.0))
            if big > BLOWUP:
                trace.events.append({"sweep": sweep, "site": j, "event": "large-entries", "max_abs": big})
            value = _chain(Ms, sites)[1]
            rec = {"sweep": sweep, "site": j, "value": value, "status": "optimal", "wall_ms": 1e3 * (time.perf_counter() - ts)}
            if restart:
                rec["restart"] = True
            trace.records.append(rec)
            if stop_on_negative and value < -threshold:
                trace.sweep_values.append(value)
                trace.status = "detected"
                trace.wall_time = time.perf_counter() - t0
                return net, trace
        trace.sweep_values.append(value)
        if on_sweep is not None:
            on_sweep(sweep, value)
        sv = trace.sweep_values
        if len(sv) > STALL_SWEEPS and not reseeded:
            old = sv[-1 - STALL_SWEEPS]
            if old - sv[-1] <= STALL_REL * max(1.0, abs(old)):
                trace.status = "stalled"
                break
    else:
        trace.status = "max-sweeps"
    trace.wall_time = time.perf_counter() - t0
    if trace.status not in ("detected",) and trace.final is not None and trace.final < -threshold:
        trace.status = "detected"
    return net, trace


# ------------------------------------------------------------ projected gradient
def project(world, A, in_type, out_type):
    """Euclidean projection of the matrix A onto the world's connector set (epigraph SDP)."""
    A = np.asarray(A, dtype=float)
    m = Model()
    M = world.feasible(m, in_type, out_type)
    D = A.size
    t = m.var(1)
    diff = (M.reshape(D) - A.ravel()).reshape((D, 1))
    # [[t, d^T], [d, I]] >= 0  <=>  t >= |d|^2
    m.psd(block([[t.reshape((1, 1)), diff.T], [diff, _const(np.eye(D))]]))
    m.minimize(t.sum())
    res = m.solve(tol=1e-9)
    if res.status != "optimal":
        raise RuntimeError(f"projection ended with status {res.status}")
    return world.certify(M.value(res.x).reshape(A.shape), in_type, out_type)


def _const(a):
    from .conic import Expr

    return Expr.constant(a)


def projected_gradient(net, box, epsilon=0.1, steps=20, seed=0):
    """Omega_j <- proj(Omega_j - epsilon E_j), cycling over connectors; iterates stay feasible."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    sites = prepare(net, box)
    w = net.engine()
    trace = OptimizationTrace(seed=seed)
    t0 = time.perf_counter()
    Ms = net.matrices()
    trace.records.append({"sweep": 0, "site": None, "value": _chain(Ms, sites)[1], "status": "initial", "wall_ms": 0.0})
    if epsilon == 0:
        trace.status = "unchanged"
        return net, trace
    for step in range(1, steps + 1):
        for j in range(len(Ms)):
            ts = time.perf_counter()
            E, _ = environments(Ms, sites)
            in_t, out_t = net.types(j)
            try:
                conn = project(w, Ms[j] - epsilon * E[j], in_t, out_t)
            except RuntimeError as exc:
                trace.status = "solver-stall"
                trace.events.append({"step": step, "site": j, "error": str(exc)})
                return net, trace
            net.connectors[j] = conn
            Ms[j] = np.asarray(conn.matrix, dtype=float)
            trace.records.append({"sweep": step, "site": j, "value": _chain(Ms, sites)[1], "status": "optimal", "wall_ms": 1e3 * (time.perf_counter() - ts)})
        trace.sweep_values.append(trace.records[-1]["value"])
    trace.status = "detected" if trace.final < -DETECT else "finished"
    trace.wall_time = time.perf_counter() - t0
    return net, trace


# ------------------------------------------------------------ warm starts
def identity_pad(world, in_type, out_type):
    """Connector (bond, site) -> bond that forwards the bond box and discards the site (a wiring)."""
    D_b = world.length(out_type)
    D_s = world.length(in_type) // D_b
    M = np.kron(np.eye(D_b), np.eye(D_s)[:1])
    return world.certify(M, in_type, out_type)


def warm_start(schedule, source=None, site_types=None, bond=(2, 2), world="LOC", seed=0, pad="identity", **world_opts):
    """Initial network for ``site_types`` under a seeding schedule.

    ``random``: connectors from Gaussian objectives with the given seed.
    ``grow``: a smaller optimized network is lengthened; the new middle links
    are identity-like wirings (``pad='identity'``) or copies of the last middle
    connector (``pad='copy'``). ``shrink``: a larger network keeps its first
    connectors and its final one.
    """
    if schedule == "random":
        return random_network(world.upper(), site_types, bond, np.random.default_rng(seed), **world_opts)
    if source is None:
        raise ValueError(f"schedule {schedule!r} needs a source network")
    site_types = list(site_types)
    m_new = len(site_types)
    net = Mpctn(source.world, site_types, source.bond, [], dict(source.world_opts))
    w = net.engine()
    if any(net.engine().length(a) != w.length(b) for a, b in zip(site_types, source.site_types)):
        raise ValueError("incompatible family: per-site types differ")
    old = source.connectors
    if schedule == "grow":
        if m_new < source.m:
            raise ValueError("grow needs a larger target")
        middle = old[1:-1]
        extra = m_new - source.m
        conns = [old[0]] + list(middle)
        for j in range(extra):
            in_t, out_t = net.types(len(conns))
            if pad == "copy" and middle:
                conns.append(middle[-1])
            else:
                conns.append(identity_pad(w, in_t, out_t))
        conns.append(old[-1])
    elif schedule == "shrink":
        if m_new > source.m or m_new < 2:
            raise ValueError("shrink needs a smaller target with at least two sites")
        conns = [old[0]] + list(old[1 : m_new - 2]) + [old[-1]] if m_new > 2 else [_merge_end(w, net, old)]
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    net.connectors = conns
    net.check()
    return net


def _merge_end(w, net, old):
    # two sites: a single connector from the two sites to the terminal output, seeded as the first one
    in_t, out_t = net.types(0)
    return w.optimize(np.zeros((w.length(out_t), w.length(in_t))) - 1e-3, in_t, out_t)


def grow_family(boxes, world="LOC", bond=(2, 2), seed=0, max_sweeps=MAX_SWEEPS, pad="identity", **world_opts):
    """See-saw over a family of growing boxes, each seeded from the previous optimum."""
    out = []
    net = None
    for box in boxes:
        types = box_sites(box)[1] if world.upper() != "SEP" else state_sites(box)[1]
        if net is None:
            net = warm_start("random", site_types=types, bond=bond, world=world, seed=seed, **world_opts)
        else:
            net = warm_start("grow", net, types, pad=pad)
        net, trace = see_saw(net, box, max_sweeps=max_sweeps, seed=seed)
        out.append((net, trace))
        net = Mpctn(net.world, net.site_types, net.bond, list(net.connectors), dict(net.world_opts))
    return out


def certify_network(net):
    """Verify every connector certificate; returns (all ok, list of verifications)."""
    from .conic import verify_certificate

    out = []
    for c in net.connectors:
        if c.certificate is None:
            out.append(None)
            continue
        out.append(verify_certificate(c.certificate, c))
    return all(v is not None and v.ok for v in out), out


# ------------------------------------------------------------ finitely correlated chains
PAIR_TYPE = Scenario([2, 2], [3, 3])
OUT_PAIR = Scenario([2, 2], [2, 2])


def pauli_to_abbreviated():
    """Single qubit: (tr rho, <X>, <Y>, <Z>) -> abbreviated coordinates of the X/Y/Z measurement box."""
    T = np.zeros((4, 4))
    T[0, 0] = 1.0
    for x in range(3):
        T[1 + x, 0] = 0.5
        T[1 + x, 1 + x] = 0.5
    return T


def xz_restriction():
    """Keeps the X and Z settings of a three-setting qubit party (abbreviated 4 -> 3)."""
    R = np.zeros((3, 4))
    R[0, 0] = R[1, 1] = R[2, 3] = 1.0
    return R


def abbreviated_channel(U):
    """16 x 16 matrix of rho -> U rho U^dagger on two X/Y/Z-measured qubits in abbreviated coordinates."""
    from .boxes import pauli_transfer

    T2 = np.kron(pauli_to_abbreviated(), pauli_to_abbreviated())
    return T2 @ pauli_transfer([(1.0, np.asarray(U))]) @ np.linalg.inv(T2)


def fcs_forms(form=None):
    """Abbreviated functionals (3 x 3) of C'' and E - C'' on (2,2;2,2) boxes."""
    from .loc import chsh_second_form
    from .boxes import unit_effect

    C = chsh_second_form() if form is None else np.asarray(form)
    S = abbreviation_map(OUT_PAIR).S.toarray()
    E = unit_effect(OUT_PAIR).ravel()
    f = (S.T @ C.ravel()).reshape(3, 3)
    g = (S.T @ (E - C.ravel())).reshape(3, 3)
    return f, g


@dataclass
class FcsResult:
    method: str
    value: float
    detected: bool
    connectors: list
    step_values: list
    info: dict = field(default_factory=dict)


def _open_env(p, Gs, forms, R):
    """Environment of the last link for the open chain pairs 0..k+1 (k = len(Gs) - 1) and its value."""
    left = R @ p  # l_0[o_0, b_0]
    for j, G in enumerate(Gs[:-1]):
        t = np.einsum("ob,oc->cb", left, forms[j])  # (o_{2j+1}, b_j)
        left = np.einsum("cb,cdba,ae->de", t, G, p)
    k = len(Gs) - 1
    lk = np.einsum("ob,oc->cb", left, forms[k])  # (o_{2k+1}, b_k)
    right = np.einsum("ae,dq,qe->da", p, forms[k + 1], R)  # (o_{2k+2}, a_{k+1})
    env = np.einsum("cb,da->cdba", lk, right)
    return env, float(np.einsum("cdba,cdba->", env, Gs[-1]))


def _ring_transfer(p, G, form):
    """T[(o_in, a_in), (o_out, a_out)] of one pair, its form and its outgoing link."""
    return np.einsum("ab,ic,cdbe->iade", p, form, G).reshape(12, 12)


def _ring_env(p, Gs, forms):
    """Environment of the ring-closing link given the other links, and the ring value."""
    m = len(Gs)
    P = np.eye(12)
    for j in range(m - 1):
        P = P @ _ring_transfer(p, Gs[j], forms[j])
    Pr = P.reshape(3, 4, 3, 4)  # (o_0, a_0, o_end, a_end)
    env = np.einsum("deia,ab,ic->cdbe", Pr, p, forms[-1])
    val = float(np.einsum("cdba,cdba->", env, Gs[-1]))
    return env, val


def ring_value(p, Gs, forms):
    """Value of the closed chain: trace of the product of the per-pair transfers."""
    P = np.eye(12)
    for G, f in zip(Gs, forms):
        P = P @ _ring_transfer(p, G, f)
    return float(np.trace(P))


def _optimize_link(env_G, V, sign=1.0):
    """Connector W minimizing sign * <env_G, W V> over LOC 2 -> 2 connectors."""
    C = sign * env_G.reshape(9, 16) @ V.T
    return optimize_connector(C, PAIR_TYPE, OUT_PAIR, method="transloc", abbreviated=True)


def fcs_heuristic(channels, method="I", pair_box=None, form=None):
    """Sequential LP construction of 2 -> 2 connectors W^1..W^m for a chain of m pairs.

    ``channels`` are two-qubit unitaries U^k acting on the second qubit of
    pair k and the first of pair k + 1 (the last wraps to pair 0). Method I
    chooses W^k (k < m) by minimizing the open-chain contraction with forms
    C'' (x) (E - C'')^k; Method II chooses W^k (k >= 2) by maximizing
    (E (x) (E - C'') (x) (E - C'') (x) E) on three pairs through W^{k-1} V^{k-1}
    and W^k V^k. Both close the ring by minimizing over the last connector.
    """
    from .boxes import tilted_pair_box
    from .loc import abbreviate

    m = len(channels)
    if m < 2:
        raise ValueError("need at least two pairs")
    if method not in ("I", "II"):
        raise ValueError("method is 'I' or 'II'")
    pair = tilted_pair_box("xyz") if pair_box is None else pair_box
    p = abbreviate(pair).reshape(4, 4)
    R = xz_restriction()
    f, g = fcs_forms(form)
    forms = [f] + [g] * (m - 1)
    Vs = [abbreviated_channel(U) for U in channels]
    Ws, Gs, steps = [], [], []
    e = np.zeros(4)
    e[0] = 1.0
    for k in range(m - 1):
        if method == "I" or k == 0:
            env, _ = _open_env(p, Gs + [np.zeros((3, 3, 4, 4))], forms[: k + 2], R)
            W = _optimize_link(env, Vs[k])
        else:
            # three pairs: E on the first raw party, (E - C'') on each link's outputs, E on the last raw party
            ea = e @ p  # (b_0)
            left = np.einsum("b,cdba,cd,ae->e", ea, Gs[k - 1], g, p)  # (b_1)
            right = p @ e  # (a_2)
            env = np.einsum("b,cd,a->cdba", left, g, right)
            W = _optimize_link(env, Vs[k], sign=-1.0)
        Ws.append(W)
        Gs.append((W.matrix @ Vs[k]).reshape(3, 3, 4, 4))
        steps.append(float(W.info["value"]))
    env, _ = _ring_env(p, Gs + [np.zeros((3, 3, 4, 4))], forms)
    W = _optimize_link(env, Vs[-1])
    Ws.append(W)
    Gs.append((W.matrix @ Vs[-1]).reshape(3, 3, 4, 4))
    value = ring_value(p, Gs, forms)
    steps.append(value)
    return FcsResult(method, value, value < -DETECT, Ws, steps, {"m": m})


def fcs_identity_value(m, pair_box=None, form=None):
    """Contraction with the X/Z restriction as every link (the un-rotated chain)."""
    from .boxes import tilted_pair_box
    from .loc import abbreviate

    pair = tilted_pair_box("xyz") if pair_box is None else pair_box
    p = abbreviate(pair).reshape(4, 4)
    f, g = fcs_forms(form)
    R = xz_restriction()
    G = np.kron(R, R).reshape(3, 3, 4, 4)
    return ring_value(p, [G] * m, [f] + [g] * (m - 1))


def fcs_trials(m, trials, seed=0, methods=("I", "II")):
    """Detection counts over seeded Haar-random channel tuples."""
    from .linalg import haar_unitary

    rng = np.random.default_rng(seed)
    counts = {mt: 0 for mt in methods}
    values = {mt: [] for mt in methods}
    for _ in range(trials):
        chans = [haar_unitary(4, rng) for _ in range(m)]
        for mt in methods:
            r = fcs_heuristic(chans, mt)
            counts[mt] += int(r.detected)
            values[mt].append(r.value)
    return counts, values
