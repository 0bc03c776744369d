"""Small quantum linear-algebra helpers (complex numpy arrays)."""

import itertools
import math
from functools import reduce

import numpy as np

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"i": I2, "x": SX, "y": SY, "z": SZ}


def kron_all(ops):
    return reduce(np.kron, ops, np.ones((1, 1), dtype=complex))


def ket(bits, d=2):
    v = np.zeros(d ** len(bits), dtype=complex)
    idx = 0
    for b in bits:
        idx = idx * d + b
    v[idx] = 1.0
    return v


def proj(v):
    v = np.asarray(v, dtype=complex).ravel()
    return np.outer(v, v.conj())


def partial_transpose(M, dims, parties):
    dims = list(dims)
    k = len(dims)
    T = np.asarray(M).reshape(dims + dims)
    axes = list(range(2 * k))
    for j in parties:
        axes[j], axes[k + j] = axes[k + j], axes[j]
    return T.transpose(axes).reshape(M.shape)


def partial_trace(M, dims, traced):
    dims = list(dims)
    k = len(dims)
    T = np.asarray(M).reshape(dims + dims)
    for j in sorted(traced, reverse=True):
        T = np.trace(T, axis1=j, axis2=j + T.ndim // 2)
    d = int(np.prod([dims[j] for j in range(k) if j not in traced]))
    return T.reshape(d, d)


def permute_systems(M, dims, perm):
    """Reorder tensor factors: new factor i is old factor perm[i]."""
    dims = list(dims)
    k = len(dims)
    T = np.asarray(M).reshape(dims + dims)
    axes = list(perm) + [k + p for p in perm]
    d = int(np.prod(dims))
    return T.transpose(axes).reshape(d, d)


def haar_unitary(d, rng):
    """Haar-random unitary via QR of a complex Gaussian matrix with phase correction."""
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def random_pure(d, rng, real=False):
    v = rng.standard_normal(d) + (0 if real else 1j * rng.standard_normal(d))
    v = np.asarray(v, dtype=complex)
    return v / np.linalg.norm(v)


def random_state(d, rng, rank=None):
    rank = d if rank is None else rank
    G = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_product_state(dims, rng, mixed=False):
    if mixed:
        return kron_all([random_state(d, rng) for d in dims])
    return kron_all([proj(random_pure(d, rng)) for d in dims])


def random_separable_state(dims, rng, terms=4):
    w = rng.dirichlet(np.ones(terms))
    return sum(p * random_product_state(dims, rng) for p in w)


def hermitian_basis(d):
    """Orthogonal Hermitian basis G_0 = I, tr(G_a G_b) = d delta_ab (Paulis for d = 2)."""
    if d == 2:
        return [I2, SX, SY, SZ]
    out = [np.eye(d, dtype=complex)]
    s = math.sqrt(d / 2)
    for j in range(d):
        for k in range(j + 1, d):
            M = np.zeros((d, d), dtype=complex)
            M[j, k] = M[k, j] = 1
            out.append(s * M)
            M = np.zeros((d, d), dtype=complex)
            M[j, k], M[k, j] = -1j, 1j
            out.append(s * M)
    for l in range(1, d):
        M = np.zeros((d, d), dtype=complex)
        M[:l, :l] = np.eye(l)
        M[l, l] = -l
        out.append(s * math.sqrt(2 / (l * (l + 1))) * M)
    return out


def sym_projector(d, k):
    """Projector onto the symmetric subspace of (C^d)^{otimes k}."""
    D = d**k
    P = np.zeros((D, D))
    for perm in itertools.permutations(range(k)):
        M = np.zeros((D, D))
        for idx in itertools.product(range(d), repeat=k):
            src = 0
            dst = 0
            for i in range(k):
                src = src * d + idx[i]
                dst = dst * d + idx[perm[i]]
            M[dst, src] = 1.0
        P += M
    return P / math.factorial(k)


def swap(d=2):
    D = d * d
    S = np.zeros((D, D))
    for i in range(d):
        for j in range(d):
            S[j * d + i, i * d + j] = 1.0
    return S


def singlet():
    return (ket([0, 1]) - ket([1, 0])) / math.sqrt(2)


def is_ppt(rho, dims, tol=1e-9):
    k = len(dims)
    for r in range(1, k // 2 + 1):
        for A in itertools.combinations(range(k), r):
            if np.linalg.eigvalsh(partial_transpose(rho, dims, A))[0] < -tol:
                return False
    return True


def bipartitions(k):
    """Subsets A of {0..k-1} up to complement (A and its complement give the same cone), lexicographic."""
    out = []
    for r in range(0, k + 1):
        for A in itertools.combinations(range(k), r):
            comp = tuple(j for j in range(k) if j not in A)
            if comp not in out and A not in out:
                out.append(A)
    return out
