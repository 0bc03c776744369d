import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from connectors.boxes import Box, Scenario
from connectors.mps import MPSBox, dense_to_mps, mps_to_dense
from connectors.tensor import IN, OUT, ContractionGraph, StructureError, Tensor, contract, environment


def _matvec_graph(M, v):
    g = ContractionGraph()
    g.add("M", Tensor(M, [("i", OUT), ("k", IN)]))
    g.add("v", Tensor(v, [("k", OUT)]))
    g.connect(("M", "k"), ("v", "k"))
    return g


def test_identity_on_vector():
    out = contract(_matvec_graph(np.eye(2), np.array([1.0, 0.0])))
    assert np.allclose(out.data, [1.0, 0.0])


def test_matrix_product():
    g = ContractionGraph()
    g.add("M", Tensor([[1, 2], [3, 4]], [("i", OUT), ("k", IN)]))
    g.add("N", Tensor([[0, 1], [1, 0]], [("k", OUT), ("j", IN)]))
    g.connect(("M", "k"), ("N", "k"))
    out = contract(g)
    assert np.allclose(out.permuted(["M:i", "N:j"]).data, [[2, 1], [4, 3]])


def test_three_tensor_chain_matches_loops():
    rng = np.random.default_rng(0)
    A, B, C = rng.normal(size=(2, 2)), rng.normal(size=(2, 2, 2)), rng.normal(size=(2, 2))
    g = ContractionGraph()
    g.add("A", Tensor(A, [("i", OUT), ("j", IN)]))
    g.add("B", Tensor(B, [("j", OUT), ("k", IN), ("l", IN)]))
    g.add("C", Tensor(C, [("k", OUT), ("l", OUT)]))
    g.connect(("A", "j"), ("B", "j"))
    g.connect(("B", "k"), ("C", "k"))
    g.connect(("B", "l"), ("C", "l"))
    out = contract(g).data
    ref = np.zeros(2)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    ref[i] += A[i, j] * B[j, k, l] * C[k, l]
    assert np.allclose(out, ref, atol=1e-12)


def test_environment_of_single_edge():
    W = np.array([[1.0, -2.0]])
    v = np.array([2.0, 3.0])
    g = ContractionGraph()
    g.add("W", Tensor(W, [("o", IN), ("k", IN)]))
    g.add("v", Tensor(v, [("k", OUT)]))
    g.add("e", Tensor([1.0], [("o", OUT)]))
    g.connect(("W", "k"), ("v", "k"))
    g.connect(("W", "o"), ("e", "o"))
    E = environment(g, "W")
    assert np.allclose(E.data.reshape(W.shape), v[None, :])
    assert np.vdot(E.data, W) == pytest.approx(contract(g).scalar())


def test_structure_errors():
    with pytest.raises(StructureError):
        Tensor(np.zeros((2, 2)), [("a", IN), ("a", OUT)])
    g = ContractionGraph()
    g.add("A", Tensor(np.zeros((2, 3)), [("i", OUT), ("j", IN)]))
    g.add("B", Tensor(np.zeros(2), [("j", OUT)]))
    with pytest.raises(StructureError, match="dimension mismatch"):
        g.connect(("A", "j"), ("B", "j"))
    with pytest.raises(StructureError, match="open outgoing"):
        g.check_witness()


def test_cycle_detected():
    g = ContractionGraph()
    g.add("A", Tensor(np.eye(2), [("i", OUT), ("j", IN)]))
    g.add("B", Tensor(np.eye(2), [("i", IN), ("j", OUT)]))
    g.connect(("A", "i"), ("B", "i"))
    g.connect(("B", "j"), ("A", "j"))
    with pytest.raises(StructureError, match="cycle"):
        g.check_witness()


def _random_chain(rng, n=4, d=2):
    g = ContractionGraph()
    for k in range(n):
        legs = [(f"r{k}", OUT)] if k < n - 1 else []
        legs = ([(f"r{k - 1}", IN)] if k else []) + legs + [(f"p{k}", IN)]
        g.add(k, Tensor(rng.normal(size=(d,) * len(legs)), legs))
    for k in range(n - 1):
        g.connect((k, f"r{k}"), (k + 1, f"r{k}"))
    for k in range(n):
        g.add(f"v{k}", Tensor(rng.normal(size=d), [(f"p{k}", OUT)]))
        g.connect((k, f"p{k}"), (f"v{k}", f"p{k}"))
    return g


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_multilinearity_and_order_independence(seed):
    rng = np.random.default_rng(seed)
    g = _random_chain(rng)
    base = contract(g).scalar()
    E = environment(g, 1)
    assert np.vdot(E.data, g.nodes[1].data) == pytest.approx(base, rel=1e-10, abs=1e-12)
    old = g.nodes[1]
    delta = rng.normal(size=old.shape)
    t = float(rng.normal())
    g.replace(1, Tensor(old.data + t * delta, old.legs))
    moved = contract(g).scalar()
    assert moved - base == pytest.approx(t * np.vdot(E.data, delta), rel=1e-9, abs=1e-10)
    g.replace(1, old)
    order = [(0, "v0"), (3, "v3"), (1, "v1"), (2, "v2"), (0, 1), (2, 3), (0, 2)]
    assert contract(g, order=order).scalar() == pytest.approx(base, rel=1e-10, abs=1e-12)


def test_single_site_mps():
    sc = Scenario([2], [2])
    data = np.array([0.3, 0.6, 0.7, 0.4])
    box = MPSBox(sc, [data.reshape(1, 4, 1)])
    assert np.allclose(mps_to_dense(box).standard().data.ravel(), data)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_dense_mps_roundtrip(seed, m):
    rng = np.random.default_rng(seed)
    sc = Scenario.uniform(m, 2, 2)
    box = Box(sc, rng.normal(size=sc.leg_dims))
    back = mps_to_dense(dense_to_mps(box))
    assert np.abs(back.standard().data - box.standard().data).max() <= 1e-12
