import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from connectors.boxes import Scenario, deterministic_box, ghz_pauli_mps, pr_box
from connectors.linalg import haar_unitary
from connectors.loc import abbreviate, optimize_connector
from connectors.mps import mps_to_dense
from connectors.mpctn import (
    Mpctn,
    certify_network,
    environments,
    evaluate,
    fcs_heuristic,
    fcs_identity_value,
    network_for,
    prepare,
    projected_gradient,
    random_network,
    ring_value,
    see_saw,
    warm_start,
    world_for,
)
from connectors.tensor import StructureError


def dense_value(net, box):
    """Oracle: apply the connectors to the full abbreviated vector of the dense box."""
    q = abbreviate(mps_to_dense(box) if not hasattr(box, "standard") else box)
    w = net.engine()
    dims = [w.length(t) for t in net.site_types]
    v = q.reshape(dims[0] * dims[1], -1)
    for j, M in enumerate(net.matrices()):
        v = M @ v
        if j + 2 < len(dims):
            v = v.reshape(M.shape[0] * dims[j + 2], -1)
    return float(v.ravel()[0])


@pytest.mark.parametrize("m", [2, 3, 5, 8])
def test_mps_evaluation_matches_dense(m):
    rng = np.random.default_rng(m)
    box = ghz_pauli_mps(m, "xy")
    net = network_for(box, seed=m)
    assert evaluate(net, box) == pytest.approx(dense_value(net, box), abs=1e-10)
    E, val = environments(net.matrices(), prepare(net, box))
    for j, M in enumerate(net.matrices()):
        assert np.vdot(E[j], M) == pytest.approx(val, abs=1e-10)
    # multilinear in each connector
    Ms = net.matrices()
    D = rng.normal(size=Ms[0].shape)
    Ms2 = [Ms[0] + D] + Ms[1:]
    E2, val2 = environments(Ms2, prepare(net, box))
    assert val2 - val == pytest.approx(np.vdot(E[0], D), abs=1e-9)


def test_structure_checks():
    box = ghz_pauli_mps(4, "xz")
    net = network_for(box)
    bad = Mpctn(net.world, net.site_types, net.bond, net.connectors[:-1])
    with pytest.raises(StructureError):
        bad.check()
    with pytest.raises(StructureError):
        evaluate(net, ghz_pauli_mps(5, "xz"))


def test_network_is_nonnegative_on_local_boxes():
    rng = np.random.default_rng(1)
    net = network_for(ghz_pauli_mps(4, "xz"), seed=2)
    assert certify_network(net)[0]
    for _ in range(30):
        b = deterministic_box([tuple(rng.integers(0, 2, size=2)) for _ in range(4)])
        assert evaluate(net, b) >= -1e-9


def test_see_saw_detects_ghz_xy():
    box = ghz_pauli_mps(4, "xy")
    net, trace = see_saw(network_for(box, seed=0), box, max_sweeps=30)
    assert trace.status == "detected"
    assert trace.final < -1e-6
    assert trace.monotone()
    assert certify_network(net)[0]


def test_see_saw_determinism_and_local_stall():
    box = ghz_pauli_mps(3, "xz")
    r1 = see_saw(network_for(box, seed=5), box, max_sweeps=15, seed=5)[1]
    r2 = see_saw(network_for(box, seed=5), box, max_sweeps=15, seed=5)[1]
    assert r1.values == r2.values
    assert r1.status in ("stalled", "max-sweeps")
    assert r1.final >= -1e-9
    assert r1.monotone()


def test_see_saw_quant_world():
    box = ghz_pauli_mps(3, "xy")
    net = network_for(box, world="QUANT", seed=0)
    net, trace = see_saw(net, box, max_sweeps=6)
    assert trace.final >= -1e-7
    assert trace.monotone()
    assert certify_network(net)[0]


def test_projected_gradient():
    box = ghz_pauli_mps(3, "xy")
    net = network_for(box, seed=1)
    before = net.matrices()
    net, trace = projected_gradient(net, box, epsilon=0.0)
    assert trace.status == "unchanged"
    assert all(np.array_equal(a, b) for a, b in zip(before, net.matrices()))
    net, trace = projected_gradient(net, box, epsilon=0.5, steps=3)
    assert certify_network(net)[0]
    # projecting a feasible connector leaves it in place
    w = world_for("LOC")
    in_t, out_t = net.types(0)
    from connectors.mpctn import project

    M = net.matrices()[0]
    # the squared distance is solved to 1e-9, so the point moves by about its square root
    assert np.abs(project(w, M, in_t, out_t).matrix - M).max() <= 1e-4
    with pytest.raises(ValueError):
        projected_gradient(net, box, epsilon=-1.0)


def test_warm_starts():
    small = ghz_pauli_mps(4, "xy")
    net, _ = see_saw(network_for(small, seed=0), small, max_sweeps=10)
    big = ghz_pauli_mps(7, "xy")
    types = network_for(big).site_types
    for pad in ("identity", "copy"):
        grown = warm_start("grow", net, types, pad=pad)
        assert grown.m == 7
        assert certify_network(grown)[0]
    shrunk = warm_start("shrink", net, types[:3])
    assert shrunk.m == 3
    rnd = warm_start("random", site_types=types, seed=3)
    assert rnd.m == 7
    with pytest.raises(ValueError):
        warm_start("grow", net, types[:2])
    with pytest.raises(ValueError):
        warm_start("grow", net, [Scenario([3], [2])] * 7)


def test_record_roundtrip():
    box = ghz_pauli_mps(3, "xy")
    net = network_for(box, seed=4)
    back = Mpctn.from_record(net.to_record())
    assert evaluate(back, box) == pytest.approx(evaluate(net, box), abs=1e-14)
    assert certify_network(back)[0]


@pytest.mark.parametrize("m", [2, 3, 4])
def test_fcs_identity_value(m):
    a, b = 0.5 - 1 / np.sqrt(2), 0.5 + 1 / np.sqrt(2)
    assert fcs_identity_value(m) == pytest.approx(a * b ** (m - 1), abs=1e-12)


def test_fcs_methods_agree_for_two_pairs():
    rng = np.random.default_rng(0)
    for _ in range(3):
        chans = [haar_unitary(4, rng) for _ in range(2)]
        r1, r2 = fcs_heuristic(chans, "I"), fcs_heuristic(chans, "II")
        assert r1.detected == r2.detected
        assert r1.value == pytest.approx(r2.value, abs=1e-9)


def test_fcs_identity_channels_detected():
    r = fcs_heuristic([np.eye(4)] * 3, "I")
    assert r.detected
    assert r.value <= fcs_identity_value(3) + 1e-9
    with pytest.raises(ValueError):
        fcs_heuristic([np.eye(4)], "I")
    with pytest.raises(ValueError):
        fcs_heuristic([np.eye(4)] * 2, "III")


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_connector_chain_value_bounded_on_local_boxes(seed):
    rng = np.random.default_rng(seed)
    net = random_network("LOC", [Scenario([2], [2])] * 3, (2, 2), rng)
    b = deterministic_box([tuple(rng.integers(0, 2, size=2)) for _ in range(3)])
    v = evaluate(net, b)
    assert -1e-9 <= v <= 1 + 1e-9
