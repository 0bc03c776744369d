import itertools

import numpy as np
import pytest

from connectors.boxes import Box, Scenario, all_deterministic, deterministic_box, pr_box, tilted_pair_box
from connectors.conic import verify_certificate
from connectors.loc import (
    Connector,
    Emit,
    Route,
    abbreviate,
    non_wiring_connector,
    chsh_connector,
    chsh_form,
    chsh_tree,
    expand,
    identity_connector,
    local_membership,
    optimize_2to1_fast,
    optimize_connector,
    sequential_wiring,
    vertex_matrix,
    wiring,
)

PAIR = Scenario([2, 2], [2, 2])
BIT = Scenario([2], [2])


def random_local_box(sc, rng, subnormalized=False):
    V = vertex_matrix(sc)
    w = rng.dirichlet(np.ones(V.shape[0]))
    if subnormalized:
        w *= rng.uniform(0.2, 1.0)
    return Box(sc, w @ V)


def test_abbreviated_roundtrip():
    rng = np.random.default_rng(0)
    for b in all_deterministic(PAIR):
        q = abbreviate(b)
        assert q.size == 9
        assert np.array_equal(expand(q, PAIR).standard().data, b.standard().data)
    b = random_local_box(Scenario([2, 3, 2], [3, 2, 2]), rng)
    assert np.abs(expand(abbreviate(b), b.scenario).standard().data - b.standard().data).max() <= 1e-12


def test_membership_verdicts():
    res = local_membership(pr_box())
    assert res.verdict == "nonlocal"
    assert verify_certificate(res.certificate, pr_box()).ok
    for b in all_deterministic(PAIR):
        res = local_membership(b)
        assert res.verdict == "local"
        assert res.weights.max() == pytest.approx(1.0)
        assert verify_certificate(res.certificate, b).ok
    uniform = Box(PAIR, np.full(PAIR.leg_dims, 0.25))
    assert local_membership(uniform).verdict == "local"


def test_zero_objective_gives_zero_connector():
    conn = optimize_connector(np.zeros((4, 16)), PAIR, BIT)
    assert conn.info["value"] == pytest.approx(0.0, abs=1e-12)
    assert np.abs(conn.matrix).max() <= 1e-9
    assert verify_certificate(conn.certificate, conn).ok
    fast = optimize_2to1_fast(np.zeros((4, 16)), 2, 2, 2, 2, BIT)
    assert fast.info["value"] == pytest.approx(0.0, abs=1e-12)
    assert np.abs(fast.matrix).max() == 0.0


def test_optimized_connector_beats_chsh_on_pr_box():
    C = np.zeros((4, 16))
    C[0] = pr_box().standard().data.ravel()
    conn = optimize_connector(C, PAIR, BIT)
    chsh_val = chsh_connector().apply(pr_box()).standard().data.ravel()[0]
    assert chsh_val == pytest.approx(-0.5)
    assert conn.info["value"] <= chsh_val + 1e-9
    assert verify_certificate(conn.certificate, conn).ok


def test_identity_recovered():
    C = -np.eye(4)
    conn = optimize_connector(C, BIT, BIT)
    ident = identity_connector(BIT)
    assert conn.info["value"] == pytest.approx(float(np.sum(C * ident.standard_matrix())), abs=1e-9)


def test_fast_2to1_matches_vertex_lp():
    rng = np.random.default_rng(3)
    for _ in range(10):
        C = rng.normal(size=(4, 16))
        a = optimize_2to1_fast(C, 2, 2, 2, 2, BIT)
        b = optimize_connector(C, PAIR, BIT)
        assert a.info["value"] == pytest.approx(b.info["value"], abs=1e-6)
        assert verify_certificate(a.certificate, a).ok
        assert verify_certificate(b.certificate, b).ok


def test_fast_2to1_reaches_quantum_chsh_value():
    C = np.zeros((4, 16))
    C[0] = tilted_pair_box("xz").standard().data.ravel()
    conn = optimize_2to1_fast(C, 2, 2, 2, 2, BIT)
    assert conn.info["value"] <= 0.5 - 1 / np.sqrt(2) + 1e-9
    assert verify_certificate(conn.certificate, conn).ok


def test_sequential_wiring_on_pr_box():
    # direct sum: P'(b|y) = sum_a P(a, b | y, a)
    pr = pr_box()
    out = sequential_wiring().apply(pr)
    for b, y in itertools.product(range(2), repeat=2):
        ref = sum(pr.prob([a, b], [y, a]) for a in range(2))
        assert out.prob([b], [y]) == pytest.approx(ref, abs=1e-12)
    assert out.prob([0], [0]) == pytest.approx(0.5)
    assert out.prob([0], [1]) == pytest.approx(1.0)


def test_identity_wiring_and_positivity():
    ident = wiring(PAIR, PAIR, [Route(0, 0, (), lambda y, _: y), Route(1, 1, (), lambda y, _: y)], [Emit(0, (0,), lambda y, a: a[0]), Emit(1, (1,), lambda y, a: a[0])])
    rng = np.random.default_rng(0)
    b = random_local_box(PAIR, rng)
    assert np.allclose(ident.apply(b).standard().data, b.standard().data)
    for W in (ident, sequential_wiring()):
        for b in list(all_deterministic(PAIR)) + [pr_box()]:
            assert W.apply(b).standard().data.min() >= -1e-12


def test_cyclic_routing_rejected():
    from connectors.tensor import StructureError

    with pytest.raises(StructureError):
        wiring(PAIR, BIT, [Route(0, 0, (1,), lambda y, a: a[0]), Route(1, 0, (0,), lambda y, a: a[0])], [Emit(0, (1,), lambda y, a: a[0])])


def test_chsh_connector_on_deterministic_boxes():
    K = chsh_connector()
    assert verify_certificate(K.certificate, K).ok
    for b in all_deterministic(PAIR):
        out = K.apply(b).table()  # [b, y]
        assert out.min() >= 0 and out.max() <= 1
        assert np.allclose(out.sum(axis=0), 1.0)
    assert K.apply(pr_box()).prob([0], [0]) == pytest.approx(-0.5)


@pytest.mark.parametrize("depth, value", [(1, -0.5), (2, -1.5)])
def test_chsh_tree_values(depth, value):
    from connectors.loc import ns_min_value

    res = ns_min_value(chsh_tree(depth))
    assert res.value == pytest.approx(value, abs=1e-6)
    assert verify_certificate(res.certificate, None).ok


def test_chsh_tree_on_pr_pair_matches_dense():
    net = chsh_tree(2)
    pr = pr_box().standard().data
    four = np.multiply.outer(pr, pr).reshape(Scenario.uniform(4).leg_dims)
    box = Box(Scenario.uniform(4), four)
    K = chsh_connector().standard_matrix()
    inner = K @ pr.ravel()
    direct = (K @ np.kron(inner, inner))[0]
    assert net.evaluate(box) == pytest.approx(direct, abs=1e-12)


def test_tree_is_normalized_inequality_on_local_boxes():
    rng = np.random.default_rng(5)
    net = chsh_tree(2)
    for _ in range(50):
        b = random_local_box(Scenario.uniform(4), rng)
        v = net.evaluate(b)
        assert -1e-10 <= v <= b.norm() + 1e-10


def test_non_wiring_connector():
    W = non_wiring_connector()
    assert verify_certificate(W.certificate, W).ok
    for b in all_deterministic(PAIR):
        out = W.apply(b)
        assert local_membership(out).verdict == "local"
        assert abbreviate(out)[0] == pytest.approx(1.0)
    # PR variant with the output and input bits of both parties flipped
    T = np.zeros((2, 2, 2, 2))
    for a, b, x, y in itertools.product(range(2), repeat=4):
        T[a, b, x, y] = 0.5 * (((1 - a) ^ (1 - b)) == ((1 - x) & (1 - y)))
    from connectors.boxes import from_table

    variant = from_table(T, [2, 2], [2, 2], physical=True)
    assert W.apply(variant).standard().data.min() < -1e-6


def test_connector_closure_on_local_mixtures():
    rng = np.random.default_rng(7)
    conn = optimize_connector(rng.normal(size=(16, 16)), PAIR, PAIR)
    assert verify_certificate(conn.certificate, conn).ok
    for _ in range(200):
        out = conn.apply(random_local_box(PAIR, rng))
        assert local_membership(out).verdict == "local"


def test_tensoring_with_identity_keeps_locality():
    rng = np.random.default_rng(8)
    conn = optimize_connector(rng.normal(size=(4, 16)), PAIR, BIT)
    for _ in range(20):
        b = random_local_box(Scenario.uniform(3), rng)
        out = conn.apply(b, parties=[0, 1])
        assert out.scenario == Scenario.uniform(2)
        assert local_membership(out).verdict == "local"


def test_positive_functionals_sound_on_local_boxes():
    rng = np.random.default_rng(9)
    conn = optimize_2to1_fast(rng.normal(size=(4, 16)), 2, 2, 2, 2, BIT)
    for _ in range(500):
        b = random_local_box(PAIR, rng, subnormalized=True)
        out = conn.apply(b)
        assert out.standard().data.min() >= -1e-8
        assert out.norm() <= b.norm() + 1e-8


def test_norm_excess_nonpositive():
    assert chsh_connector().norm_excess() <= 1e-12
    assert identity_connector(PAIR).norm_excess() <= 1e-12
    bad = Connector(BIT, BIT, 2 * np.eye(3))
    assert bad.norm_excess() > 0


def test_chsh_form_range_on_deterministic():
    C = chsh_form()
    vals = [float(np.sum(C * b.standard().data)) for b in all_deterministic(PAIR)]
    assert min(vals) >= -1e-12 and max(vals) <= 1 + 1e-12
    assert deterministic_box([(0, 0), (0, 0)]).norm() == pytest.approx(1.0)
