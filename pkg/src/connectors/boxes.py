"""Scenarios, boxes and the box/state families used in the experiments.

A party with ``O`` outputs and ``I`` inputs has a doubled leg of extent
``O * I`` indexed by ``y = a * I + x``. Dense standard boxes are arrays over the
doubled legs of all parties.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .linalg import PAULIS, haar_unitary, kron_all, partial_transpose, proj, singlet
from .mps import MPSBox, mps_to_dense


@dataclass(frozen=True)
class Scenario:
    outputs: tuple
    inputs: tuple

    def __init__(self, outputs, inputs):
        outputs, inputs = tuple(int(o) for o in outputs), tuple(int(i) for i in inputs)
        if len(outputs) != len(inputs):
            raise ValueError("outputs and inputs must list the same parties")
        if any(o < 1 for o in outputs) or any(i < 1 for i in inputs):
            raise ValueError("every party needs at least one output and one input")
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "inputs", inputs)

    @classmethod
    def uniform(cls, m, O=2, I=2):
        return cls((O,) * m, (I,) * m)

    @property
    def m(self):
        return len(self.outputs)

    @property
    def parties(self):
        return list(zip(self.outputs, self.inputs))

    @property
    def leg_dims(self):
        return tuple(o * i for o, i in self.parties)

    @property
    def abbreviated_dims(self):
        return tuple(i * (o - 1) + 1 for o, i in self.parties)

    @property
    def abbreviated_length(self):
        return int(np.prod(self.abbreviated_dims))

    def __add__(self, other):
        return Scenario(self.outputs + other.outputs, self.inputs + other.inputs)

    def sub(self, parties):
        return Scenario([self.outputs[k] for k in parties], [self.inputs[k] for k in parties])

    def label(self):
        return "[" + ",".join(map(str, self.outputs + self.inputs)) + "]"


def unit_effect_vector(O, I):
    w = np.zeros(O * I)
    w[np.arange(O) * I] = 1.0
    return w


def unit_effect(scenario):
    """Dense tensor of E: 1 where every input is 0."""
    E = np.ones(())
    for O, I in scenario.parties:
        E = np.multiply.outer(E, unit_effect_vector(O, I))
    return E


class Box:
    """A (pseudo-)box. ``representation`` is 'standard' or 'abbreviated'."""

    def __init__(self, scenario, data, representation="standard", physical=False, tol=1e-9):
        self.scenario = scenario
        self.representation = representation
        data = np.asarray(data, dtype=float)
        if representation == "standard":
            data = data.reshape(scenario.leg_dims)
        elif representation == "abbreviated":
            data = data.reshape(scenario.abbreviated_length)
        else:
            raise ValueError(f"unknown representation {representation!r}")
        self.data = data
        self.physical = False
        if physical:
            self.check_physical(tol)
            self.physical = True

    def standard(self):
        if self.representation == "standard":
            return self
        from .loc import abbreviation_map

        S = abbreviation_map(self.scenario).S
        return Box(self.scenario, S @ self.data, physical=self.physical)

    def table(self):
        """Array indexed as ``[a_1, ..., a_m, x_1, ..., x_m]``."""
        sc = self.scenario
        T = self.standard().data.reshape([d for p in sc.parties for d in p])
        m = sc.m
        return T.transpose(list(range(0, 2 * m, 2)) + list(range(1, 2 * m, 2)))

    def prob(self, a, x):
        return float(self.table()[tuple(a) + tuple(x)])

    def norm(self):
        return float(np.sum(self.standard().data * unit_effect(self.scenario)))

    def marginal(self, keep):
        """Marginal on the listed parties (input 0 for traced parties)."""
        sc = self.scenario
        T = self.standard().data
        for k in sorted(set(range(sc.m)) - set(keep), reverse=True):
            T = np.tensordot(T, unit_effect_vector(*sc.parties[k]), axes=([k], [0]))
        return Box(sc.sub(sorted(keep)), T)

    def signalling_report(self):
        """Largest dependence of a party-summed marginal on that party's input."""
        sc = self.scenario
        T = self.table()
        m = sc.m
        worst = 0.0
        for k in range(m):
            s = T.sum(axis=k)  # removes a_k; x_k axis is now at index m-1+k
            ax = m - 1 + k
            ref = np.take(s, [0], axis=ax)
            worst = max(worst, float(np.abs(s - ref).max()))
        return worst

    def check_physical(self, tol=1e-9):
        T = self.table()
        m = self.scenario.m
        if T.min() < -max(tol, 1e-12):
            raise ValueError(f"negative entry {T.min():.3e}")
        sums = T.sum(axis=tuple(range(m)))
        if np.abs(sums - 1).max() > tol:
            raise ValueError(f"fixed-input slices sum to {sums.min():.6f}..{sums.max():.6f}")
        sig = self.signalling_report()
        if sig > tol:
            raise ValueError(f"signalling box: marginal depends on own input by {sig:.3e}")

    def __repr__(self):
        return f"Box({self.scenario.label()}, {self.representation}, physical={self.physical})"


def from_table(table, outputs, inputs, physical=False):
    """Build a Box from an array indexed ``[a_1..a_m, x_1..x_m]``."""
    sc = Scenario(outputs, inputs)
    m = sc.m
    T = np.asarray(table, dtype=float)
    order = [ax for k in range(m) for ax in (k, m + k)]
    return Box(sc, T.transpose(order).reshape(sc.leg_dims), physical=physical)


# ------------------------------------------------------------------ deterministic
def deterministic_box(assignments, outputs=None):
    """Product box with party k answering ``assignments[k][x]`` on input x."""
    assignments = [tuple(int(v) for v in f) for f in assignments]
    if outputs is None:
        outputs = [2] * len(assignments)
    inputs = [len(f) for f in assignments]
    sc = Scenario(outputs, inputs)
    data = np.ones(())
    for f, (O, I) in zip(assignments, sc.parties):
        if any(v < 0 or v >= O for v in f):
            raise ValueError(f"assignment {f} outside output range {O}")
        v = np.zeros(O * I)
        for x, a in enumerate(f):
            v[a * I + x] = 1.0
        data = np.multiply.outer(data, v)
    return Box(sc, data, physical=True)


def party_assignments(O, I):
    """All functions {0..I-1} -> {0..O-1}, lexicographic."""
    return list(itertools.product(range(O), repeat=I))


def deterministic_vectors(O, I):
    """Rows: standard single-party vectors of every deterministic strategy, lexicographic."""
    out = []
    for f in party_assignments(O, I):
        v = np.zeros(O * I)
        for x, a in enumerate(f):
            v[a * I + x] = 1.0
        out.append(v)
    return np.array(out)


def all_deterministic(scenario):
    for combo in itertools.product(*[party_assignments(O, I) for O, I in scenario.parties]):
        yield deterministic_box(combo, scenario.outputs)


# ------------------------------------------------------------------ xor boxes
def boolean_xor_box(f, m):
    """P = 2^(1-m) delta(a_1 xor ... xor a_m, f(x)) for a boolean function f on {0,1}^m."""
    if callable(f):
        table = np.array([int(f(x)) & 1 for x in itertools.product((0, 1), repeat=m)]).reshape((2,) * m)
    else:
        table = np.asarray(f, dtype=int).reshape((2,) * m)
    T = np.zeros((2,) * (2 * m))
    for a in itertools.product((0, 1), repeat=m):
        par = sum(a) & 1
        for x in itertools.product((0, 1), repeat=m):
            T[a + x] = 2.0 ** (1 - m) * (par == table[x])
    return from_table(T, [2] * m, [2] * m, physical=True)


def pr_box():
    return boolean_xor_box(lambda x: x[0] & x[1], 2)


def svetlichny_function(x):
    m = len(x)
    return sum(x[k] & x[(k + 1) % m] for k in range(m)) & 1


def consecutive_ones_function(r):
    def f(x):
        run = 0
        for b in x:
            run = run + 1 if b else 0
            if run >= r:
                return 1
        return 0

    return f


def majority_function(x):
    return int(sum(x) >= len(x) / 2)


# ------------------------------------------------------------------ MPS families
def _e(i, n):
    v = np.zeros(n)
    v[i] = 1.0
    return v


_X = np.array([[0.0, 1.0], [1.0, 0.0]])


def _xp(p):
    return _X if p & 1 else np.eye(2)


def _xor_mps(m, first, middle, last):
    sc = Scenario.uniform(m)
    sites = []
    for k in range(m):
        blocks = []
        for a in (0, 1):
            for x in (0, 1):
                if k == 0:
                    blocks.append(first(a, x)[None, :])
                elif k == m - 1:
                    blocks.append(last(a, x)[:, None])
                else:
                    blocks.append(middle(a, x))
        sites.append(np.stack(blocks, axis=1))  # y = a*2 + x
    return MPSBox(sc, sites)


def svetlichny_mps(m):
    """Svetlichny box as an MPS with four qubit registers (bond 16)."""
    if m < 3:
        raise ValueError("the Svetlichny MPS needs m >= 3")
    # registers: first input, previous input, running f, running output parity
    first = lambda a, x: 0.5 * np.kron(np.kron(np.kron(_e(x, 2), _e(x, 2)), _e(0, 2)), _e(a, 2))

    def middle(a, x):
        shift = sum(np.kron(np.outer(_e(y, 2), _e(x, 2)), _xp(y * x)) for y in (0, 1))
        return 0.5 * np.kron(np.kron(np.eye(2), shift), _xp(a))

    def last(a, x):
        v = np.zeros(16)
        for y in (0, 1):
            for z in (0, 1):
                for s in (0, 1):
                    v += np.kron(np.kron(np.kron(_e(z, 2), _e(y, 2)), _e(s, 2)), _xp(x * (y + z) + a) @ _e(s, 2))
        return v

    return _xor_mps(m, first, middle, last)


def _counter_mps(m, n_levels, step, accept):
    first = lambda a, x: 0.5 * np.kron(_e(x, n_levels), _e(a, 2))
    middle = lambda a, x: 0.5 * np.kron(step(x), _xp(a))
    end = sum(np.kron(_e(j, n_levels), _e(1 if accept(j) else 0, 2)) for j in range(n_levels))
    last = lambda a, x: np.kron(step(x), _xp(a)) @ end
    return _xor_mps(m, first, middle, last)


def consecutive_ones_mps(m, r):
    """Box for f = 1 iff the input string contains r consecutive ones (bond 2(r+1))."""
    if not 1 <= r <= m:
        raise ValueError("need 1 <= r <= m")
    n = r + 1

    def step(x):
        M = np.outer(_e(r, n), _e(r, n))
        for j in range(r):
            M += np.outer(_e(j, n), _e(x * (j + 1), n))
        return M

    if m == 1:
        return MPSBox(Scenario.uniform(1), [boolean_xor_box(consecutive_ones_function(r), 1).data.reshape(1, 4, 1)])
    return _counter_mps(m, n, step, lambda j: j == r)


def majority_mps(m):
    """Box for f = 1 iff at least half of the inputs are 1 (bond 2(ceil(m/2)+1))."""
    if m < 1:
        raise ValueError("need m >= 1")
    h = math.ceil(m / 2)
    n = h + 1

    def step(x):
        M = np.outer(_e(h, n), _e(h, n))
        for j in range(h):
            M += np.outer(_e(j, n), _e(j + x, n))
        return M

    if m == 1:
        return MPSBox(Scenario.uniform(1), [boolean_xor_box(majority_function, 1).data.reshape(1, 4, 1)])
    # the accepting set stops below h: counter value h means "at least half"
    return _counter_mps(m, n, step, lambda j: j == h)


# ------------------------------------------------------------------ quantum boxes
@dataclass
class QuantumModel:
    """State and per-party measurements ``measurements[k][x][a]``."""

    state: np.ndarray
    measurements: list
    dims: tuple = None

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=complex)
        if self.dims is None:
            self.dims = tuple(np.asarray(mk[0][0]).shape[0] for mk in self.measurements)
        D = int(np.prod(self.dims))
        if self.state.shape != (D, D):
            raise ValueError(f"state shape {self.state.shape} does not match party dims {self.dims}")

    def check(self, tol=1e-9):
        rho = self.state
        if np.abs(rho - rho.conj().T).max() > tol:
            raise ValueError("state is not Hermitian")
        if np.linalg.eigvalsh(rho)[0] < -tol or np.trace(rho).real > 1 + tol:
            raise ValueError("state is not a subnormalized density matrix")
        for k, mk in enumerate(self.measurements):
            d = self.dims[k]
            for x, ops in enumerate(mk):
                total = sum(np.asarray(M, dtype=complex) for M in ops)
                if np.abs(total - np.eye(d)).max() > tol:
                    raise ValueError(f"party {k} input {x}: POVM elements do not sum to identity")
                for M in ops:
                    if np.linalg.eigvalsh(np.asarray(M, dtype=complex))[0] < -tol:
                        raise ValueError(f"party {k} input {x}: POVM element not PSD")

    @property
    def scenario(self):
        return Scenario([len(mk[0]) for mk in self.measurements], [len(mk) for mk in self.measurements])


def _measurement_tensor(mk, d):
    """Array M[y, i, j] with y = a*I + x."""
    I = len(mk)
    O = len(mk[0])
    T = np.zeros((O * I, d, d), dtype=complex)
    for x in range(I):
        for a in range(O):
            T[a * I + x] = mk[x][a]
    return T


def quantum_box(model: QuantumModel, check=True):
    """Born-rule box P(a|x) = tr(rho M^1_{a1|x1} ... M^m_{am|xm})."""
    if check:
        model.check()
    dims = list(model.dims)
    m = len(dims)
    T = model.state.reshape(dims + dims)
    # contract party by party; processed party's doubled leg goes to the end
    for k in range(m):
        M = _measurement_tensor(model.measurements[k], dims[k])
        # remaining tensor axes: (row_k..row_m-1, col_k..col_m-1, y_0..y_{k-1})
        r = m - k
        T = np.tensordot(T, M, axes=([0, r], [2, 1]))
    T = np.real_if_close(T, tol=1e6)
    if np.iscomplexobj(T):
        if np.abs(T.imag).max() > 1e-9:
            raise ValueError("Born-rule probabilities have imaginary parts")
        T = T.real
    sc = model.scenario
    return Box(sc, T.reshape(sc.leg_dims), physical=True, tol=1e-8)


def pauli_measurements(names="xyz"):
    """Projective qubit measurement per Pauli name; outcome a=0 is the +1 eigenspace."""
    out = []
    for n in names:
        P = PAULIS[n]
        out.append([(np.eye(2) + P) / 2, (np.eye(2) - P) / 2])
    return out


def tilted_pair_state():
    """(exp(i pi sigma_y / 8) x I)(|00> + |11>)/sqrt(2)."""
    c, s = math.cos(math.pi / 8), math.sin(math.pi / 8)
    R = np.array([[c, s], [-s, c]], dtype=complex)
    phi = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
    return np.kron(R, np.eye(2)) @ phi


def tilted_pair_box(settings="xyz"):
    """Two-party box of the tilted maximally entangled pair probed with Pauli measurements."""
    ms = pauli_measurements(settings)
    return quantum_box(QuantumModel(proj(tilted_pair_state()), [ms, ms]))


def ghz_state(m):
    v = np.zeros(2**m, dtype=complex)
    v[0] = v[-1] = 1 / math.sqrt(2)
    return v


def ghz_pauli_mps(m, settings="xz"):
    """GHZ box with per-site Pauli measurements as a real MPS of bond dimension 4.

    The bond carries the GHZ branch pair (i, j) of |i..i><j..j|; the two
    off-diagonal branches are conjugate and are stored as one complex number
    in a real 2x2 rotation-scaling block.
    """
    if m < 2:
        raise ValueError("need m >= 2")
    ms = pauli_measurements(settings)
    I = len(ms)
    blocks = np.zeros((2 * I, 4, 4))
    for x in range(I):
        for a in range(2):
            M = ms[x][a]
            z = M[0, 1]
            blk = np.zeros((4, 4))
            blk[0, 0] = M[0, 0].real
            blk[1, 1] = M[1, 1].real
            blk[2:, 2:] = [[z.real, -z.imag], [z.imag, z.real]]
            blocks[a * I + x] = blk
    left = 0.5 * np.array([1.0, 1.0, 1.0, 0.0])
    right = np.array([1.0, 1.0, 2.0, 0.0])
    sites = []
    for k in range(m):
        if k == 0:
            sites.append(np.einsum("l,ylr->yr", left, blocks)[None])
        elif k == m - 1:
            sites.append(np.einsum("ylr,r->ly", blocks, right)[:, :, None])
        else:
            sites.append(blocks.transpose(1, 0, 2))
    return MPSBox(Scenario.uniform(m, 2, I), sites)


# ------------------------------------------------------------------ FCS chains
def _pauli_tensor(n):
    """Array P[mu, :, :] of n-qubit Pauli strings, mu in base 4 (I, X, Y, Z)."""
    ps = [PAULIS[c] for c in "ixyz"]
    return np.array([kron_all(t) for t in itertools.product(ps, repeat=n)])


def pauli_transfer(channel_kraus_weights):
    """Real 16x16 matrix of a 2-qubit channel in the Pauli-coefficient basis.

    ``channel_kraus_weights`` is a list of (weight, unitary). With
    rho = 2^-n sum_mu r_mu sigma_mu, the channel acts as r -> T r.
    """
    P = _pauli_tensor(2)
    T = np.zeros((16, 16))
    for w, U in channel_kraus_weights:
        for mu in range(16):
            out = U @ P[mu] @ U.conj().T
            T[:, mu] += w * np.real(np.einsum("nij,ji->n", P, out)) / 4
    return T


def pauli_vector(rho, n):
    P = _pauli_tensor(n)
    return np.real(np.einsum("nij,ji->n", P, rho))


def _normalize_channel(ch, mode):
    ch_arr = None
    if isinstance(ch, tuple) and len(ch) == 3:
        U, V, q = ch
        items = [(1 - q, np.asarray(U, complex)), (q, np.asarray(V, complex))]
    else:
        ch_arr = np.asarray(ch, dtype=complex)
        items = [(1.0, ch_arr)]
    for w, U in items:
        if U.shape != (4, 4) or np.abs(U.conj().T @ U - np.eye(4)).max() > 1e-9:
            raise ValueError("pair channels must be built from 4x4 unitaries")
        if not 0 <= w <= 1:
            raise ValueError("mixing weight outside [0, 1]")
    if mode == "nonlocality" and len([w for w, _ in items if w > 0]) > 1:
        raise ValueError("nonlocality mode expects unitary channels")
    return items


class PauliMPS:
    """Real MPS of a qubit operator in Pauli coefficients: rho = 2^-n sum r(mu) sigma_mu."""

    def __init__(self, sites):
        self.sites = [np.asarray(s, dtype=float) for s in sites]

    @property
    def n(self):
        return len(self.sites)

    @property
    def bond_dims(self):
        return [s.shape[2] for s in self.sites[:-1]]

    def coefficients(self):
        acc = self.sites[0][0]
        for s in self.sites[1:]:
            acc = np.tensordot(acc, s, axes=([acc.ndim - 1], [0]))
        return acc[..., 0]

    def to_dense(self):
        n = self.n
        if n > 12:
            raise MemoryError("dense operator too large")
        r = self.coefficients().ravel()
        P = _pauli_tensor(n)
        return np.einsum("n,nij->ij", r, P) / 2**n

    def measure(self, settings="xyz"):
        """MPSBox of Pauli measurements on every qubit."""
        ms = pauli_measurements(settings)
        I = len(ms)
        B = np.zeros((2 * I, 4))
        for x, n in enumerate(settings):
            col = "ixyz".index(n)
            for a in range(2):
                B[a * I + x, 0] = 0.5
                B[a * I + x, col] = 0.5 * (1 if a == 0 else -1)
        sites = [np.einsum("ym,lmr->lyr", B, s) for s in self.sites]
        return MPSBox(Scenario.uniform(self.n, 2, I), sites)


def _split_two_site(T):
    """Split a (4,4,4,4) map (out_a, out_b, in_a, in_b) into left (4,4,g) and right (g,4,4)."""
    M = T.transpose(0, 2, 1, 3).reshape(16, 16)
    U, s, Vt = np.linalg.svd(M)
    g = max(1, int(np.sum(s > 1e-12 * s[0])))
    L = (U[:, :g] * s[:g]).reshape(4, 4, g)
    R = Vt[:g].reshape(g, 4, 4)
    return L, R


def fcs_pauli_mps(pair_vector, transfers):
    """Pauli-coefficient MPS of pairs on qubits (2k, 2k+1) followed by channels on (2k+1, 2k+2).

    The last channel wraps around onto qubits (2m-1, 0); its bond index is
    carried along the whole open chain.
    """
    m = len(transfers)
    R = np.asarray(pair_vector, dtype=float).reshape(4, 4)
    U, s, Vt = np.linalg.svd(R)
    p = max(1, int(np.sum(s > 1e-12 * s[0])))
    pu = U[:, :p] * s[:p]  # (mu on first qubit, alpha)
    pv = Vt[:p]  # (alpha, mu on second qubit)
    splits = [_split_two_site(T.reshape(4, 4, 4, 4)) for T in transfers]
    gw = splits[-1][0].shape[2]
    sites = []
    for k in range(m):
        L_k = splits[k][0]
        R_prev = splits[k - 1][1]
        A = np.einsum("goi,ia->goa", R_prev, pu)  # qubit 2k: (g_{k-1}, out, alpha_k)
        B = np.einsum("ai,oig->aog", pv, L_k)  # qubit 2k+1: (alpha_k, out, g_k)
        if k == 0:
            sites.append(A.transpose(1, 0, 2).reshape(1, 4, gw * p).copy())
        else:
            sites.append(_carry(A, gw))
        if k == m - 1:
            sites.append(B.transpose(2, 0, 1).reshape(gw * p, 4, 1).copy())
        else:
            sites.append(_carry(B, gw))
    return PauliMPS(sites)


def _carry(A, gw):
    """Tensor a (l, o, r) site with the identity on a carried bond of size gw: (gw*l, o, gw*r)."""
    l, o, r = A.shape
    out = np.einsum("lor,wv->wlovr", A, np.eye(gw))
    return out.reshape(gw * l, o, gw * r)


def fcs_chain(m, pair_channels, mode="nonlocality", settings="xyz"):
    """Finitely correlated chain of m pairs with two-qubit channels between neighbouring pairs.

    Nonlocality mode uses the tilted pair state and unitary channels and
    returns the 2m-party Pauli-measurement MPSBox. Entanglement mode uses
    singlets and channels given as ``(U, V, q)`` meaning
    ``(1-q) U.U^dag + q V.V^dag`` and returns a PauliMPS of the mixed state.
    Channel k acts on qubits (2k+1, 2k+2), the last one on (2m-1, 0).
    """
    if len(pair_channels) != m:
        raise ValueError(f"expected {m} channels, got {len(pair_channels)}")
    items = [_normalize_channel(ch, mode) for ch in pair_channels]
    transfers = [pauli_transfer(it) for it in items]
    psi = tilted_pair_state() if mode == "nonlocality" else singlet()
    rv = pauli_vector(proj(psi), 2)
    mps = fcs_pauli_mps(rv, transfers)
    if mode == "nonlocality":
        return mps.measure(settings)
    if mode == "entanglement":
        return mps
    raise ValueError(f"unknown mode {mode!r}")


def fcs_dense_state(m, pair_channels, mode="nonlocality"):
    """Dense 2m-qubit density matrix of the same chain (oracle for small m)."""
    items = [_normalize_channel(ch, mode) for ch in pair_channels]
    psi = tilted_pair_state() if mode == "nonlocality" else singlet()
    n = 2 * m
    rho = kron_all([proj(psi)] * m)
    from .linalg import permute_systems

    for k, it in enumerate(items):
        a, b = 2 * k + 1, (2 * k + 2) % n
        # bring (a, b) to the front, apply, move back
        perm = [a, b] + [j for j in range(n) if j not in (a, b)]
        inv = np.argsort(perm)
        r = permute_systems(rho, [2] * n, perm)
        r = sum(w * np.kron(U, np.eye(2 ** (n - 2))) @ r @ np.kron(U, np.eye(2 ** (n - 2))).conj().T for w, U in it)
        rho = permute_systems(r, [2] * n, list(inv))
    return rho


def random_fcs_channels(m, rng, mixing=None):
    """Haar-random unitaries (or two-unitary mixtures with weight ``mixing``)."""
    if mixing is None:
        return [haar_unitary(4, rng) for _ in range(m)]
    return [(haar_unitary(4, rng), haar_unitary(4, rng), mixing) for _ in range(m)]


# ------------------------------------------------------------------ UPB states
def upb_state(product_basis, tol=1e-9, check_ppt=True):
    """Normalized projector onto the complement of a set of orthogonal product vectors.

    ``product_basis`` is a list of product vectors, each a list of local kets.
    An empty set needs the local dimensions, see ``upb_state_dims``.
    """
    vecs = [[np.asarray(v, dtype=complex) for v in p] for p in product_basis]
    if not vecs:
        raise ValueError("pass at least the local dimensions via a non-empty basis or use upb_state_dims")
    dims = [v.size for v in vecs[0]]
    return upb_state_dims(vecs, dims, tol, check_ppt)


def upb_state_dims(vecs, dims, tol=1e-9, check_ppt=True):
    D = int(np.prod(dims))
    full = []
    for p in vecs:
        if [v.size for v in p] != list(dims):
            raise ValueError("all product vectors must share the local dimensions")
        full.append(kron_all([v / np.linalg.norm(v) for v in p]).ravel())
    for i in range(len(full)):
        for j in range(i):
            if abs(np.vdot(full[i], full[j])) > tol:
                raise ValueError(f"product vectors {j} and {i} are not orthogonal")
    rho = np.eye(D, dtype=complex)
    for v in full:
        rho -= np.outer(v, v.conj())
    tr = np.trace(rho).real
    if tr < tol:
        raise ValueError("the vectors span the whole space")
    rho /= tr
    if check_ppt:
        from .linalg import bipartitions

        for A in bipartitions(len(dims))[1:]:
            ev = np.linalg.eigvalsh(partial_transpose(rho, dims, A))[0]
            if ev < -tol:
                raise ValueError(f"state is not PPT across {A} (eigenvalue {ev:.3e}); input is not a UPB")
    return rho


def shifts_upb():
    """The three-qubit Shifts UPB {|0,1,+>, |1,+,0>, |+,0,1>, |-,-,->}."""
    z, o = np.array([1, 0]), np.array([0, 1])
    p, mi = np.array([1, 1]) / math.sqrt(2), np.array([1, -1]) / math.sqrt(2)
    return [[z, o, p], [o, p, z], [p, z, o], [mi, mi, mi]]
