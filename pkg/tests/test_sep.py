import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from connectors.conic import verify_certificate
from connectors.linalg import ket, partial_transpose, proj, random_product_state, singlet
from connectors.sep import (
    SepConnector,
    collective_spin,
    compose_toth_w6,
    connector_to_witness,
    depolarize,
    depolarizing_weight,
    dps_membership,
    hybrid_steer_witness,
    min_over_ppt,
    optimize_sep_connector,
    ppt_output_connector,
    sample_connector_checks,
    toth_detection,
    toth_witness,
    witness_to_connector,
)


def test_toth_two_qubits():
    W = toth_witness(2).matrix
    assert np.real(np.vdot(singlet(), W @ singlet())) == pytest.approx(-1.0)
    assert np.real(np.vdot(ket([0, 0]), W @ ket([0, 0]))) == pytest.approx(1.0)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_toth_nonnegative_on_product_states(m):
    rng = np.random.default_rng(m)
    W = toth_witness(m).matrix
    for _ in range(200):
        rho = random_product_state([2] * m, rng)
        assert np.real(np.trace(W @ rho)) >= -1e-10


def test_collective_spin_commutation():
    Jx, Jy, Jz = collective_spin(3)
    assert np.allclose(Jx @ Jy - Jy @ Jx, 1j * Jz)


def test_dps_membership():
    S = proj(singlet())
    assert not dps_membership(S, [2, 2], k=2).feasible
    assert not dps_membership(S, [2, 2], k=2, ppt=False).feasible
    assert dps_membership(np.eye(4) / 4, [2, 2], k=2).feasible
    # Werner states: separable for visibility <= 1/3
    werner = lambda v: v * S + (1 - v) * np.eye(4) / 4
    assert dps_membership(werner(0.3), [2, 2], k=2).feasible
    assert not dps_membership(werner(0.4), [2, 2], k=1).feasible


def test_singlet_objective_connector():
    # the best 2 -> 1 connector against the singlet sends it to a negative number
    S = proj(singlet())
    C = np.kron(S.T, np.diag([1.0, 0.0]))
    conn = optimize_sep_connector(C, (2, 2), 2, k=1)
    assert verify_certificate(conn.certificate, conn).ok
    assert conn.apply(S)[0, 0].real < -1e-3
    worst_eig, worst_norm = sample_connector_checks(conn, np.random.default_rng(0), n=500)
    assert worst_eig >= -1e-8 and worst_norm <= 1e-8
    worst_eig, worst_norm = sample_connector_checks(conn, np.random.default_rng(1), n=500, mixed=True)
    assert worst_eig >= -1e-8 and worst_norm <= 1e-8


def test_zero_objective_gives_zero_connector():
    conn = optimize_sep_connector(np.zeros((8, 8)), (2, 2), 2)
    assert np.abs(conn.choi).max() <= 1e-9  # interior margin only
    assert verify_certificate(conn.certificate, conn).ok


def test_tampered_sep_certificate_fails():
    S = proj(singlet())
    conn = optimize_sep_connector(np.kron(S.T, np.diag([1.0, 0.0])), (2, 2), 2)
    bad = SepConnector(conn.in_dims, conn.out_dims, conn.choi - 0.1 * np.eye(8), certificate=conn.certificate)
    assert not verify_certificate(conn.certificate, bad).ok


def test_depolarizing_map():
    X = np.diag([1.0, 0.0])
    assert np.allclose(depolarize(X, 2, 1), np.diag([2 / 3, 1 / 3]))
    assert np.allclose(depolarize(X, 2, 2), np.diag([3 / 4, 1 / 4]))
    assert depolarizing_weight(2, 2) == pytest.approx(0.5)


def test_ppt_output_connector():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(16, 16))
    C = A + A.T
    conn = ppt_output_connector(C, (2, 2), (2, 2))
    assert verify_certificate(conn.certificate, conn).ok
    for _ in range(100):
        out = conn.apply(random_product_state([2, 2], rng))
        out = 0.5 * (out + out.conj().T)
        assert np.linalg.eigvalsh(out)[0] >= -1e-8
        assert np.linalg.eigvalsh(partial_transpose(out, [2, 2], [0]))[0] >= -1e-8
    with pytest.raises(ValueError):
        ppt_output_connector(np.eye(64), (2, 2), (2, 4))


def test_witness_connector_roundtrip():
    W = toth_witness(3).matrix
    conn = witness_to_connector(W, (2, 2), (2,))
    assert np.allclose(connector_to_witness(conn), W)
    eig, norm = sample_connector_checks(conn, np.random.default_rng(3), n=200)
    assert eig >= -1e-9 and norm <= 1e-9


def test_composed_six_qubit_witness_and_detection():
    W6, conn = compose_toth_w6()
    rng = np.random.default_rng(4)
    for _ in range(200):
        rho = random_product_state([2] * 6, rng)
        assert np.real(np.trace(W6.matrix @ rho)) >= -1e-9
    res = toth_detection(W6)
    assert res.value < -1e-3
    assert res.grid_min >= -1e-6
    # the grid is an outer relaxation, so the certified state may miss the exact condition
    exact = toth_detection(W6, exact=True)
    assert exact.value >= res.value - 1e-6


def test_hybrid_steer_witness():
    res = min_over_ppt(hybrid_steer_witness())
    assert res.value == pytest.approx(-0.0721, abs=5e-4)
    ctrl = min_over_ppt(hybrid_steer_witness(control=True))
    assert ctrl.value >= -1e-7


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_steer_witness_nonnegative_on_product_states(seed):
    rng = np.random.default_rng(seed)
    X = hybrid_steer_witness().matrix
    rho = random_product_state([2, 2, 2], rng, mixed=True)
    assert np.real(np.trace(X @ rho)) >= -1e-10
