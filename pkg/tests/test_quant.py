import numpy as np
import pytest

from connectors.boxes import QuantumModel, Scenario, all_deterministic, pauli_measurements, pr_box, quantum_box, tilted_pair_box
from connectors.conic import verify_certificate
from connectors.linalg import haar_unitary, ket, proj
from connectors.loc import abbreviate, abbreviation_map, chsh_form, chsh_second_form
from connectors.quant import (
    certify_positive_quantum,
    certify_quantum_matrix,
    moment_basis,
    npa_membership,
    optimize_quantum_connector,
)

PAIR = Scenario([2, 2], [2, 2])
BIT = Scenario([2], [2])
TSIRELSON = 0.5 - 1 / np.sqrt(2)


def unit_effect():
    e = np.zeros(PAIR.abbreviated_length)
    e[0] = 1.0
    return e


def functional(form):
    return np.asarray(abbreviation_map(PAIR).S.T @ np.asarray(form).ravel()).ravel()


def random_quantum_box(rng):
    U = haar_unitary(4, rng)
    psi = U @ ket([0, 0])
    ms = []
    for _ in range(2):
        party = []
        for _ in range(2):
            V = haar_unitary(2, rng)
            party.append([V @ proj(ket([a])) @ V.conj().T for a in range(2)])
        ms.append(party)
    return quantum_box(QuantumModel(proj(psi), ms))


def test_moment_basis_sizes():
    assert moment_basis(PAIR, 1).n == 5
    assert moment_basis(PAIR, "1+AB").n == 9
    # the level-1 words are the identity and one projector per (party, output, input)
    assert moment_basis(PAIR, 1).words[0] == ()


def test_unit_effect_certified_and_negation_not():
    r = certify_positive_quantum(unit_effect(), PAIR)
    assert r.certified and r.min_eig > 0
    assert verify_certificate(r.certificate, None).ok
    assert not certify_positive_quantum(-unit_effect(), PAIR).certified


def test_chsh_forms_at_tsirelson_bound():
    # C'' reaches 1/2 - 1/sqrt(2) on quantum boxes, so only its shift is positive
    assert not certify_positive_quantum(chsh_second_form(), PAIR).certified
    shifted = functional(chsh_second_form()) + (-TSIRELSON + 1e-6) * unit_effect()
    assert certify_positive_quantum(shifted, PAIR).certified
    below = functional(chsh_second_form()) + (-TSIRELSON - 1e-3) * unit_effect()
    assert not certify_positive_quantum(below, PAIR).certified
    # C is non-negative only on local boxes
    assert not certify_positive_quantum(chsh_form(), PAIR).certified


def test_npa_membership():
    assert npa_membership(tilted_pair_box("xz")).feasible
    assert not npa_membership(pr_box()).feasible
    for b in all_deterministic(PAIR):
        assert npa_membership(b).feasible


def test_moment_matrix_of_quantum_model_is_psd():
    rng = np.random.default_rng(0)
    basis = moment_basis(PAIR)
    U = haar_unitary(4, rng)
    z = pauli_measurements("xz")
    model = QuantumModel(proj(U @ ket([0, 0])), [z, z])
    G = basis.moment_matrix(model)
    assert np.linalg.eigvalsh(G)[0] >= -1e-10
    q = abbreviate(quantum_box(model))
    assert np.allclose(G.ravel()[[u * basis.n + v for u, v in (np.argwhere(basis.entry == j)[0] for j in basis.coord)]], q)


def test_zero_objective_gives_zero_connector():
    conn = optimize_quantum_connector(np.zeros((4, 16)), PAIR, BIT)
    assert np.abs(conn.matrix).max() == 0.0
    assert verify_certificate(conn.certificate, conn).ok


def test_connector_minimizes_chsh_on_quantum_box():
    C = np.zeros((4, 16))
    C[0] = tilted_pair_box("xz").standard().data.ravel()
    conn = optimize_quantum_connector(C, PAIR, BIT)
    assert verify_certificate(conn.certificate, conn).ok
    # a quantum connector cannot send a quantum box to a negative box
    assert conn.info["value"] >= -1e-6


def test_connector_soundness_on_random_quantum_boxes():
    rng = np.random.default_rng(2)
    C = np.zeros((4, 16))
    C[0] = pr_box().standard().data.ravel()
    conn = optimize_quantum_connector(C, PAIR, BIT)
    assert verify_certificate(conn.certificate, conn).ok
    assert conn.info["value"] < -1e-3
    for _ in range(100):
        out = conn.apply(random_quantum_box(rng)).standard().data
        assert out.min() >= -1e-8
    for b in all_deterministic(PAIR):
        assert conn.apply(b).standard().data.min() >= -1e-8


def test_certify_matrix_and_reject_nonconnector():
    rng = np.random.default_rng(3)
    conn = optimize_quantum_connector(rng.normal(size=(4, 16)), PAIR, BIT)
    again = certify_quantum_matrix(conn.matrix, PAIR, BIT)
    assert verify_certificate(again.certificate, again).ok
    # the CHSH-to-bit map built from C'' is not quantum
    M = np.zeros((3, 9))
    M[0, 0] = 1.0
    M[1] = functional(chsh_second_form())
    M[2, 0] = 0.5
    with pytest.raises(RuntimeError):
        certify_quantum_matrix(M, PAIR, BIT)


def test_tampered_certificate_fails():
    conn = optimize_quantum_connector(np.random.default_rng(4).normal(size=(4, 16)), PAIR, BIT)
    cert = conn.certificate
    Z = np.array(cert.payload["Z"])
    Z[0] -= 1e-3 * np.eye(Z.shape[1]) + np.linalg.eigvalsh(Z[0])[0] * np.eye(Z.shape[1])
    from connectors.conic import Certificate

    bad = Certificate(cert.kind, {**cert.payload, "Z": Z}, cert.tol)
    assert not verify_certificate(bad, conn).ok
