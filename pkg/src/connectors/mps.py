"""Matrix-product boxes.

Site ``k`` stores an array of shape ``(D_left, O_k * I_k, D_right)`` indexed by
the doubled leg ``y = a * I_k + x``; the boundary vectors are folded into the
first and last sites (``D_left = 1`` and ``D_right = 1``).
"""

from dataclasses import dataclass

import numpy as np

DENSE_GUARD = 2 * 10**8


class CapacityError(MemoryError):
    """A dense object would exceed the memory guard."""


@dataclass(frozen=True)
class MPSBox:
    scenario: object
    sites: tuple

    def __init__(self, scenario, sites):
        sites = tuple(np.asarray(s, dtype=float) for s in sites)
        if len(sites) != scenario.m:
            raise ValueError(f"{len(sites)} sites for {scenario.m} parties")
        if sites[0].shape[0] != 1 or sites[-1].shape[2] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for k, (s, n) in enumerate(zip(sites, scenario.leg_dims)):
            if s.ndim != 3 or s.shape[1] != n:
                raise ValueError(f"site {k} has shape {s.shape}, expected (D, {n}, D')")
            if k and sites[k - 1].shape[2] != s.shape[0]:
                raise ValueError(f"bond mismatch between sites {k - 1} and {k}")
        object.__setattr__(self, "scenario", scenario)
        object.__setattr__(self, "sites", sites)

    @property
    def m(self):
        return self.scenario.m

    @property
    def bond_dims(self):
        return [s.shape[2] for s in self.sites[:-1]]

    @property
    def max_bond(self):
        return max(self.bond_dims, default=1)

    def site(self, k, a, x):
        """The matrix Lambda^[k]_{a,x}."""
        return self.sites[k][:, a * self.scenario.inputs[k] + x, :]

    def entry(self, a, x):
        v = np.ones((1,))
        for k in range(self.m):
            v = v @ self.site(k, a[k], x[k])
        return float(v[0])

    def contract_with(self, vectors):
        """Contract every site leg with the given per-site vectors."""
        v = np.ones(1)
        for s, w in zip(self.sites, vectors):
            v = v @ np.einsum("lyr,y->lr", s, w)
        return float(v[0])

    def norm(self):
        """Unit effect: sum over outputs at input 0 for every party."""
        vecs = []
        for O, I in zip(self.scenario.outputs, self.scenario.inputs):
            w = np.zeros(O * I)
            w[np.arange(O) * I] = 1.0
            vecs.append(w)
        return self.contract_with(vecs)


def mps_to_dense(box: MPSBox, guard=DENSE_GUARD):
    """Multiply out the site tensors into a dense standard Box."""
    from .boxes import Box

    size = int(np.prod(box.scenario.leg_dims, dtype=object))
    if size > guard:
        raise CapacityError(f"dense box needs {size} entries, guard is {guard}")
    acc = box.sites[0][0]  # (y1, D)
    for s in box.sites[1:]:
        acc = np.tensordot(acc, s, axes=([acc.ndim - 1], [0]))
    data = acc[..., 0]
    return Box(box.scenario, data.reshape(box.scenario.leg_dims))


def dense_to_mps(box, rtol=1e-14):
    """Exact MPS of a dense standard box by sequential SVDs."""
    from .boxes import Box

    if not isinstance(box, Box):
        raise TypeError("dense_to_mps expects a Box")
    dims = box.scenario.leg_dims
    rest = np.asarray(box.standard().data, dtype=float).reshape(1, -1)
    sites = []
    for k, n in enumerate(dims[:-1]):
        D = rest.shape[0]
        mat = rest.reshape(D * n, -1)
        U, s, Vt = np.linalg.svd(mat, full_matrices=False)
        keep = max(1, int(np.sum(s > rtol * max(s[0], 1e-300))))
        sites.append(U[:, :keep].reshape(D, n, keep))
        rest = s[:keep, None] * Vt[:keep]
    sites.append(rest.reshape(rest.shape[0], dims[-1], 1))
    return MPSBox(box.scenario, sites)
