"""Standard-form LP and SDP containers, solver results and certificates."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SENSES = (">=", "<=", "=")


def _as_csr(A, ncols):
    if A is None:
        return sp.csr_matrix((0, ncols))
    if sp.issparse(A):
        return sp.csr_matrix(A, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return sp.csr_matrix((0, ncols))
    return sp.csr_matrix(A)


@dataclass(frozen=True)
class LinearProgram:
    """minimize c.x subject to row-wise ``A x (sense) b`` and ``lb <= x <= ub``.

    Rows default to ``>=`` so that the plain form ``A x >= b`` is the default.
    Bounds default to free variables.
    """

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    sense: tuple
    lb: np.ndarray
    ub: np.ndarray

    def __init__(self, c, A=None, b=None, sense=None, lb=None, ub=None):
        c = np.asarray(c, dtype=float).ravel()
        n = c.size
        A = _as_csr(A, n)
        m = A.shape[0]
        b = np.zeros(m) if b is None else np.asarray(b, dtype=float).ravel()
        if sense is None:
            sense = (">=",) * m
        elif isinstance(sense, str):
            sense = (sense,) * m
        sense = tuple(sense)
        lb = np.full(n, -np.inf) if lb is None else np.broadcast_to(np.asarray(lb, float), (n,)).copy()
        ub = np.full(n, np.inf) if ub is None else np.broadcast_to(np.asarray(ub, float), (n,)).copy()
        if A.shape[1] != n or b.size != m or len(sense) != m:
            raise ValueError(f"inconsistent LP dimensions: c {n}, A {A.shape}, b {b.size}, sense {len(sense)}")
        if any(s not in SENSES for s in sense):
            raise ValueError(f"row senses must be among {SENSES}")
        if np.any(lb > ub):
            raise ValueError("lower bound exceeds upper bound")
        for name, arr in (("c", c), ("b", b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sense", sense)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def shape(self):
        return self.A.shape

    def row_mask(self, s):
        return np.array([t == s for t in self.sense], dtype=bool)


@dataclass(frozen=True)
class PsdBlock:
    """Affine matrix ``F0 + sum_i x_i F_i`` constrained to be PSD.

    ``F`` stores the row-major vectorization of every ``F_i`` as a column.
    """

    F0: np.ndarray
    F: sp.csr_matrix

    @property
    def dim(self):
        return self.F0.shape[0]

    def evaluate(self, x):
        d = self.dim
        return self.F0 + (self.F @ x).reshape(d, d)

    def adjoint(self, Z):
        """Vector of ``tr(F_i Z)``."""
        return self.F.T @ np.asarray(Z).ravel()


@dataclass(frozen=True)
class SemidefiniteProgram:
    """minimize c.x s.t. every block ``F0 + sum x_i F_i`` is PSD, ``G x <= h`` and ``A x = b``."""

    c: np.ndarray
    blocks: tuple
    G: sp.csr_matrix
    h: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray

    def __init__(self, c, blocks=(), G=None, h=None, A=None, b=None, check=True):
        c = np.asarray(c, dtype=float).ravel()
        n = c.size
        out = []
        for blk in blocks:
            if not isinstance(blk, PsdBlock):
                F0, F = blk
                blk = PsdBlock(np.asarray(F0, dtype=float), sp.csr_matrix(F, dtype=float))
            d = blk.F0.shape[0]
            if blk.F0.shape != (d, d) or blk.F.shape != (d * d, n):
                raise ValueError(f"block shape mismatch: F0 {blk.F0.shape}, F {blk.F.shape}, n={n}")
            if check:
                perm = np.arange(d * d).reshape(d, d).T.ravel()
                asym = abs(blk.F[perm] - blk.F).max() if blk.F.nnz else 0.0
                if asym > 1e-12 or np.abs(blk.F0 - blk.F0.T).max() > 1e-12:
                    raise ValueError("PSD block data must be symmetric")
            out.append(blk)
        G = _as_csr(G, n)
        h = np.zeros(G.shape[0]) if h is None else np.asarray(h, dtype=float).ravel()
        A = _as_csr(A, n)
        b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float).ravel()
        if G.shape[1] != n or A.shape[1] != n or h.size != G.shape[0] or b.size != A.shape[0]:
            raise ValueError("inconsistent SDP dimensions")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "blocks", tuple(out))
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self):
        return self.c.size

    def adjoint(self, Zs, lam, y):
        """``F^*(Z) - G^T lam + A^T y`` which must equal c at a dual feasible point."""
        out = np.zeros(self.n)
        for blk, Z in zip(self.blocks, Zs):
            out += blk.adjoint(Z)
        if lam is not None and len(lam):
            out -= self.G.T @ lam
        if y is not None and len(y):
            out += self.A.T @ y
        return out

    def dual_objective(self, Zs, lam, y):
        val = -sum(float(np.vdot(blk.F0, Z)) for blk, Z in zip(self.blocks, Zs))
        if lam is not None and len(lam):
            val -= float(self.h @ lam)
        if y is not None and len(y):
            val += float(self.b @ y)
        return val


@dataclass
class Certificate:
    """Solver-independent evidence; ``verify_certificate`` rechecks it by matrix arithmetic."""

    kind: str
    payload: dict
    tol: float = 1e-7
    meta: dict = field(default_factory=dict)


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None
    objective: float | None
    dual: dict
    certificate: Certificate | None = None
    backend: str = ""
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == "optimal"

    def __iter__(self):
        # allows ``status, x, dual = solve_lp(...)``
        return iter((self.status, self.x, self.dual))
