import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from connectors.boxes import (
    QuantumModel,
    all_deterministic,
    boolean_xor_box,
    consecutive_ones_function,
    consecutive_ones_mps,
    deterministic_box,
    fcs_chain,
    fcs_dense_state,
    ghz_pauli_mps,
    ghz_state,
    majority_function,
    majority_mps,
    pauli_measurements,
    pr_box,
    quantum_box,
    random_fcs_channels,
    shifts_upb,
    svetlichny_function,
    svetlichny_mps,
    tilted_pair_box,
    upb_state,
    upb_state_dims,
)
from connectors.linalg import bipartitions, ket, partial_transpose, proj
from connectors.loc import abbreviation_map
from connectors.mps import mps_to_dense


def test_single_party_identity_box():
    b = deterministic_box([(0, 1)])
    for a, x in itertools.product(range(2), repeat=2):
        assert b.prob([a], [x]) == float(a == x)


def test_constant_pair_box():
    b = deterministic_box([(0, 0), (0, 0)])
    for x, y in itertools.product(range(2), repeat=2):
        assert b.prob([0, 0], [x, y]) == 1.0


def test_sixteen_deterministic_pair_boxes():
    boxes = list(all_deterministic(pr_box().scenario))
    assert len(boxes) == 16
    assert len({b.standard().data.tobytes() for b in boxes}) == 16


def test_xor_boxes():
    shared = boolean_xor_box(lambda x: 0, 2)
    for a, b, x, y in itertools.product(range(2), repeat=4):
        assert shared.prob([a, b], [x, y]) == 0.5 * ((a ^ b) == 0)
        assert pr_box().prob([a, b], [x, y]) == 0.5 * ((a ^ b) == (x & y))
    sv = boolean_xor_box(svetlichny_function, 3)
    for a in itertools.product(range(2), repeat=3):
        for x in itertools.product(range(2), repeat=3):
            f = (x[0] & x[1]) ^ (x[1] & x[2]) ^ (x[2] & x[0])
            assert sv.prob(a, x) == 0.25 * ((sum(a) & 1) == f)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_xor_box_marginals_uniform(m):
    b = boolean_xor_box(svetlichny_function, m)
    marg = b.marginal(list(range(m - 1)))
    assert np.allclose(marg.standard().data, 2.0 ** (1 - m))


def test_abbreviated_length_formula():
    sc = pr_box().scenario
    assert sc.abbreviated_length == 9
    assert abbreviation_map(sc).S.shape == (16, 9)


@pytest.mark.parametrize("m", range(1, 7))
def test_mps_families_match_dense_oracles(m):
    if m >= 3:  # the cyclic Svetlichny function is trivial below three parties
        d = mps_to_dense(svetlichny_mps(m)).standard().data
        assert np.abs(d - boolean_xor_box(svetlichny_function, m).standard().data).max() <= 1e-10
    d = mps_to_dense(majority_mps(m)).standard().data
    assert np.abs(d - boolean_xor_box(majority_function, m).standard().data).max() <= 1e-10
    for r in range(1, m + 1):
        d = mps_to_dense(consecutive_ones_mps(m, r)).standard().data
        assert np.abs(d - boolean_xor_box(consecutive_ones_function(r), m).standard().data).max() <= 1e-10


def test_majority_half_or_more():
    b = mps_to_dense(majority_mps(4))
    # parity of the outputs carries f(x)
    assert b.prob([1, 0, 0, 0], [1, 1, 0, 0]) == pytest.approx(1 / 8)
    assert b.prob([0, 0, 0, 0], [1, 1, 0, 0]) == 0.0
    assert b.prob([0, 0, 0, 0], [1, 0, 0, 0]) == pytest.approx(1 / 8)


def test_quantum_chsh_value():
    b = tilted_pair_box("xz")
    # C'' as a standard-form functional on the pair box
    from connectors.loc import chsh_second_form

    val = float(np.sum(chsh_second_form() * b.standard().data))
    assert val == pytest.approx(0.5 - 1 / np.sqrt(2), abs=1e-9)


def test_product_state_z_measurement_is_deterministic():
    z = pauli_measurements("z")
    b = quantum_box(QuantumModel(proj(ket([0, 0])), [z, z]))
    assert b.prob([0, 0], [0, 0]) == pytest.approx(1.0)


@pytest.mark.parametrize("settings_", ["xz", "xy"])
def test_ghz_mps_matches_born_rule(settings_):
    ms = pauli_measurements(settings_)
    ref = quantum_box(QuantumModel(proj(ghz_state(3)), [ms] * 3)).standard().data
    d = mps_to_dense(ghz_pauli_mps(3, settings_)).standard().data
    assert np.abs(d - ref).max() <= 1e-12
    box = ghz_pauli_mps(6, settings_)
    assert box.max_bond == 4
    marg = mps_to_dense(box).marginal([2])
    assert np.allclose(marg.standard().data, 0.5)


def test_fcs_identity_channels_give_independent_pairs():
    m = 2
    box = mps_to_dense(fcs_chain(m, [np.eye(4)] * m)).standard().data
    pair = tilted_pair_box("xyz").standard().data
    assert np.abs(box - np.multiply.outer(pair, pair).reshape(box.shape)).max() <= 1e-12


def test_fcs_random_unitaries_match_dense_state():
    rng = np.random.default_rng(4)
    chans = random_fcs_channels(2, rng)
    box = mps_to_dense(fcs_chain(2, chans)).standard().data
    rho = fcs_dense_state(2, chans)
    ms = pauli_measurements("xyz")
    ref = quantum_box(QuantumModel(rho, [ms] * 4)).standard().data
    assert np.abs(box - ref).max() <= 1e-10


def test_fcs_entanglement_mode_pure_singlets():
    chans = [(np.eye(4), np.eye(4), 0.0)] * 2
    state = fcs_chain(2, chans, mode="entanglement").to_dense()
    from connectors.linalg import partial_trace, singlet

    pair = partial_trace(state, [4, 4], [1])
    assert np.abs(pair - proj(singlet())).max() <= 1e-12


def test_upb_states():
    rho = upb_state(shifts_upb())
    assert np.trace(rho).real == pytest.approx(1.0)
    for A in bipartitions(3)[1:]:
        assert np.linalg.eigvalsh(partial_transpose(rho, [2, 2, 2], A))[0] >= -1e-12
    not_upb = upb_state([[ket([0]), ket([0]), ket([0])]])
    assert np.trace(not_upb).real == pytest.approx(1.0)
    assert np.allclose(upb_state_dims([], [2, 2, 2]), np.eye(8) / 8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_physical_boxes_are_normalized_and_no_signalling(seed):
    rng = np.random.default_rng(seed)
    chans = random_fcs_channels(2, rng)
    b = mps_to_dense(fcs_chain(2, chans, settings="xz"))
    b.check_physical(1e-9)
    assert b.signalling_report() <= 1e-9
