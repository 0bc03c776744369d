"""A small affine modelling layer that emits :class:`SemidefiniteProgram` instances.

Expressions are ``const + coef @ x`` over a growing variable vector, carried
as a flat row-major array together with a shape. Hermitian matrices are pairs
of real expressions (symmetric real part, antisymmetric imaginary part) and
enter PSD constraints through the real embedding ``[[Re, -Im], [Im, Re]]``.
"""

import numpy as np
import scipy.sparse as sp

from .problems import PsdBlock, SemidefiniteProgram
from .sdp import solve_sdp


def _pad(coef, n):
    if coef.shape[1] == n:
        return coef
    coef = coef.tocsr(copy=True)
    coef.resize((coef.shape[0], n))
    return coef


def _perm_gather(shape, axes):
    return np.arange(int(np.prod(shape))).reshape(shape).transpose(axes).ravel()


class Expr:
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, const, coef, shape):
        self.shape = tuple(shape)
        self.const = np.asarray(const, dtype=float).ravel()
        self.coef = sp.csr_matrix(coef)
        assert self.const.size == self.coef.shape[0] == int(np.prod(self.shape, dtype=int))

    # construction helpers
    @staticmethod
    def constant(a):
        a = np.asarray(a, dtype=float)
        return Expr(a.ravel(), sp.csr_matrix((a.size, 0)), a.shape)

    @property
    def size(self):
        return self.const.size

    def _linear(self, L, shape):
        L = sp.csr_matrix(L)
        return Expr(L @ self.const, L @ self.coef, shape)

    def _gather(self, idx, shape):
        return Expr(self.const[idx], self.coef[idx], shape)

    # arithmetic
    def __add__(self, other):
        if not isinstance(other, Expr):
            other = Expr.constant(np.broadcast_to(np.asarray(other, float), self.shape))
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        n = max(self.coef.shape[1], other.coef.shape[1])
        return Expr(self.const + other.const, _pad(self.coef, n) + _pad(other.coef, n), self.shape)

    __radd__ = __add__

    def __neg__(self):
        return Expr(-self.const, -self.coef, self.shape)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Expr) else -np.asarray(other, float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        if isinstance(s, Expr):
            raise TypeError("products of expressions are not affine")
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            return Expr(self.const * s, self.coef * float(s), self.shape)
        s = np.broadcast_to(s, self.shape).ravel()
        return Expr(self.const * s, sp.diags(s) @ self.coef, self.shape)

    __rmul__ = __mul__

    def __rmatmul__(self, A):
        A = np.asarray(A, dtype=float)
        p, q = self.shape
        return self._linear(sp.kron(sp.csr_matrix(A), sp.eye(q)), (A.shape[0], q))

    def __matmul__(self, B):
        B = np.asarray(B, dtype=float)
        p, q = self.shape
        if B.ndim == 1:
            return self._linear(sp.kron(sp.eye(p), sp.csr_matrix(B[None, :])), (p,))
        return self._linear(sp.kron(sp.eye(p), sp.csr_matrix(B.T)), (p, B.shape[1]))

    def linear(self, L, shape=None):
        """Constant (sparse) matrix applied to the flattened expression."""
        L = sp.csr_matrix(L)
        return self._linear(L, (L.shape[0],) if shape is None else shape)

    def dot(self, w):
        """Scalar ``sum(w * self)``."""
        w = np.asarray(w, dtype=float).ravel()
        return self._linear(sp.csr_matrix(w[None, :]), ())

    def sum(self):
        return self.dot(np.ones(self.size))

    def reshape(self, shape):
        return Expr(self.const, self.coef, (shape,) if np.isscalar(shape) else shape)

    @property
    def T(self):
        return self.transpose((1, 0))

    def transpose(self, axes):
        idx = _perm_gather(self.shape, axes)
        return self._gather(idx, tuple(self.shape[a] for a in axes))

    def __getitem__(self, key):
        idx = np.arange(self.size).reshape(self.shape)[key]
        return self._gather(np.asarray(idx).ravel(), np.shape(idx))

    def trace(self):
        d = self.shape[0]
        return self.dot(np.eye(d))

    def kron_left(self, A):
        """``kron(A, X)`` for constant A."""
        A = np.asarray(A, dtype=float)
        p, q = self.shape
        a, b = A.shape
        # entry (i*p + k, j*q + l) = A[i,j] X[k,l]
        rows, cols, vals = [], [], []
        big = np.arange(a * p * b * q).reshape(a, p, b, q)
        src = np.arange(p * q).reshape(p, q)
        for i in range(a):
            for j in range(b):
                if A[i, j] != 0:
                    rows.append(big[i, :, j, :].ravel())
                    cols.append(src.ravel())
                    vals.append(np.full(p * q, A[i, j]))
        if rows:
            L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(a * p * b * q, p * q))
        else:
            L = sp.csr_matrix((a * p * b * q, p * q))
        return self._linear(L, (a * p, b * q))

    def kron_right(self, B):
        """``kron(X, B)`` for constant B."""
        B = np.asarray(B, dtype=float)
        p, q = self.shape
        a, b = B.shape
        big = np.arange(p * a * q * b).reshape(p, a, q, b)
        src = np.arange(p * q).reshape(p, q)
        rows, cols, vals = [], [], []
        for i in range(a):
            for j in range(b):
                if B[i, j] != 0:
                    rows.append(big[:, i, :, j].ravel())
                    cols.append(src.ravel())
                    vals.append(np.full(p * q, B[i, j]))
        if rows:
            L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(p * a * q * b, p * q))
        else:
            L = sp.csr_matrix((p * a * q * b, p * q))
        return self._linear(L, (p * a, q * b))

    def partial_transpose(self, dims, parties):
        dims = list(dims)
        k = len(dims)
        axes = list(range(2 * k))
        for j in parties:
            axes[j], axes[k + j] = axes[k + j], axes[j]
        d = int(np.prod(dims))
        idx = _perm_gather(dims + dims, axes)
        return self._gather(idx, (d, d))

    def partial_trace(self, dims, traced):
        """Trace out the factors listed in ``traced``."""
        dims = list(dims)
        k = len(dims)
        keep = [j for j in range(k) if j not in traced]
        dk = int(np.prod([dims[j] for j in keep]))
        full = np.arange(int(np.prod(dims)) ** 2).reshape(dims + dims)
        # move kept row axes, kept col axes, then paired traced axes
        axes = keep + [k + j for j in keep] + list(traced) + [k + j for j in traced]
        arr = full.transpose(axes)
        dt = int(np.prod([dims[j] for j in traced])) if traced else 1
        arr = arr.reshape(dk, dk, dt, dt)
        src = np.stack([arr[:, :, t, t] for t in range(dt)], axis=-1).reshape(dk * dk, dt)
        rows = np.repeat(np.arange(dk * dk), dt)
        L = sp.csr_matrix((np.ones(rows.size), (rows, src.ravel())), shape=(dk * dk, full.size))
        return self._linear(L, (dk, dk))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        coef = _pad(self.coef, x.size)
        return (self.const + coef @ x).reshape(self.shape)


def block(rows):
    """Assemble a block matrix from a nested list of 2-d Expr."""
    heights = [r[0].shape[0] for r in rows]
    widths = [e.shape[1] for e in rows[0]]
    H, W = sum(heights), sum(widths)
    n = max(e.coef.shape[1] for r in rows for e in r)
    const = np.zeros(H * W)
    parts = []
    r0 = 0
    for r, h in zip(rows, heights):
        c0 = 0
        for e, w in zip(r, widths):
            tgt = ((np.arange(h)[:, None] + r0) * W + (np.arange(w)[None, :] + c0)).ravel()
            const[tgt] = e.const
            coo = _pad(e.coef, n).tocoo()
            parts.append((tgt[coo.row], coo.col, coo.data))
            c0 += w
        r0 += h
    rr = np.concatenate([p[0] for p in parts])
    cc = np.concatenate([p[1] for p in parts])
    vv = np.concatenate([p[2] for p in parts])
    return Expr(const, sp.csr_matrix((vv, (rr, cc)), shape=(H * W, n)), (H, W))


class HExpr:
    """Hermitian matrix expression ``re + i im`` with re symmetric, im antisymmetric."""

    def __init__(self, re, im):
        self.re, self.im = re, im
        self.shape = re.shape

    @staticmethod
    def constant(M):
        M = np.asarray(M, dtype=complex)
        return HExpr(Expr.constant(M.real), Expr.constant(M.imag))

    def __add__(self, o):
        if not isinstance(o, HExpr):
            o = HExpr.constant(np.broadcast_to(o, self.shape))
        return HExpr(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return HExpr(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-o if isinstance(o, HExpr) else -np.asarray(o))

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, s):
        return HExpr(self.re * s, self.im * s)

    __rmul__ = __mul__

    def partial_transpose(self, dims, parties):
        # transposing Hermitian factors keeps Hermiticity; the imaginary part changes sign blockwise
        return HExpr(self.re.partial_transpose(dims, parties), self.im.partial_transpose(dims, parties))

    def partial_trace(self, dims, traced):
        return HExpr(self.re.partial_trace(dims, traced), self.im.partial_trace(dims, traced))

    def kron_left(self, A):
        A = np.asarray(A, dtype=complex)
        re = self.re.kron_left(A.real) - self.im.kron_left(A.imag)
        im = self.im.kron_left(A.real) + self.re.kron_left(A.imag)
        return HExpr(re, im)

    def kron_right(self, B):
        B = np.asarray(B, dtype=complex)
        re = self.re.kron_right(B.real) - self.im.kron_right(B.imag)
        im = self.im.kron_right(B.real) + self.re.kron_right(B.imag)
        return HExpr(re, im)

    def sandwich(self, P):
        """``P X P^dagger`` for constant complex P."""
        P = np.asarray(P, dtype=complex)
        Pr, Pi = P.real, P.imag
        if not np.any(Pi):
            return HExpr(Pr @ self.re @ Pr.T, Pr @ self.im @ Pr.T)
        re = Pr @ self.re @ Pr.T + Pi @ self.re @ Pi.T - Pr @ self.im @ Pi.T + Pi @ self.im @ Pr.T
        im = Pr @ self.im @ Pr.T + Pi @ self.im @ Pi.T + Pi @ self.re @ Pr.T - Pr @ self.re @ Pi.T
        return HExpr(re, im)

    def inner(self, C):
        """Real scalar ``tr(X C)`` for Hermitian constant C."""
        C = np.asarray(C, dtype=complex)
        return self.re.dot(C.real) + self.im.dot(C.imag)

    def trace(self):
        return self.re.trace()

    def embed(self):
        return block([[self.re, -self.im], [self.im, self.re]])

    def value(self, x):
        return self.re.value(x) + 1j * self.im.value(x)


class Model:
    """Collects variables and constraints, then builds and solves the SDP."""

    def __init__(self):
        self.n = 0
        self.blocks = []
        self.eq_rows, self.eq_rhs = [], []
        self.le_rows, self.le_rhs = [], []
        self.objective = None

    def var(self, shape):
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        k = int(np.prod(shape, dtype=int))
        start = self.n
        self.n += k
        coef = sp.csr_matrix((np.ones(k), (np.arange(k), start + np.arange(k))), shape=(k, self.n))
        return Expr(np.zeros(k), coef, shape)

    def sym(self, d):
        k = d * (d + 1) // 2
        start = self.n
        self.n += k
        iu = np.triu_indices(d)
        ids = np.zeros((d, d), dtype=int)
        ids[iu] = start + np.arange(k)
        ids = np.triu(ids) + np.triu(ids, 1).T
        coef = sp.csr_matrix((np.ones(d * d), (np.arange(d * d), ids.ravel())), shape=(d * d, self.n))
        return Expr(np.zeros(d * d), coef, (d, d))

    def antisym(self, d):
        k = d * (d - 1) // 2
        start = self.n
        self.n += k
        iu = np.triu_indices(d, 1)
        rows, cols, vals = [], [], []
        for t, (i, j) in enumerate(zip(*iu)):
            rows += [i * d + j, j * d + i]
            cols += [start + t, start + t]
            vals += [1.0, -1.0]
        coef = sp.csr_matrix((vals, (rows, cols)), shape=(d * d, self.n))
        return Expr(np.zeros(d * d), coef, (d, d))

    def herm(self, d, real=False):
        re = self.sym(d)
        im = Expr.constant(np.zeros((d, d))) if real else self.antisym(d)
        return HExpr(re, im)

    def psd(self, M):
        if isinstance(M, HExpr):
            if M.im.coef.nnz == 0 and not np.any(M.im.const):
                M = M.re
            else:
                M = M.embed()
        M = (M + M.T) * 0.5
        self.blocks.append(M)

    def eq(self, expr, rhs=0.0):
        rhs = np.broadcast_to(np.asarray(rhs, float), expr.shape).ravel()
        self.eq_rows.append(expr.coef)
        self.eq_rhs.append(rhs - expr.const)

    def ge(self, expr, rhs=0.0):
        rhs = np.broadcast_to(np.asarray(rhs, float), expr.shape).ravel()
        self.le_rows.append(-expr.coef)
        self.le_rhs.append(expr.const - rhs)

    def minimize(self, expr):
        self.objective = expr

    def maximize(self, expr):
        self.objective = -expr

    def build(self):
        n = self.n
        c = np.zeros(n)
        if self.objective is not None:
            c = _pad(self.objective.coef, n).toarray().ravel()
        blocks = []
        for M in self.blocks:
            d = M.shape[0]
            blocks.append(PsdBlock(M.const.reshape(d, d), _pad(M.coef, n)))
        A = sp.vstack([_pad(r, n) for r in self.eq_rows]).tocsr() if self.eq_rows else None
        b = np.concatenate(self.eq_rhs) if self.eq_rhs else None
        G = sp.vstack([_pad(r, n) for r in self.le_rows]).tocsr() if self.le_rows else None
        h = np.concatenate(self.le_rhs) if self.le_rhs else None
        return SemidefiniteProgram(c, blocks, G, h, A, b, check=False)

    def solve(self, tol=1e-8, backend="clarabel"):
        prob = self.build()
        res = solve_sdp(prob, tol=tol, backend=backend)
        if res.objective is not None and self.objective is not None:
            res.info["model_objective"] = float(self.objective.value(res.x))
        res.info["problem"] = prob
        return res
