"""One test per acceptance criterion; each records and prints a PASS/FAIL line."""

import time

import numpy as np
import pytest
from scipy import stats

from connectors import mpctn
from connectors.boxes import (
    all_deterministic,
    boolean_xor_box,
    consecutive_ones_function,
    consecutive_ones_mps,
    ghz_pauli_mps,
    majority_function,
    majority_mps,
    pr_box,
    svetlichny_function,
    svetlichny_mps,
    tilted_pair_box,
)
from connectors.conic import verify_certificate
from connectors.linalg import proj, random_product_state, singlet
from connectors.boxes import from_table
from connectors.loc import non_wiring_connector, chsh_second_form, chsh_tree, local_membership, ns_min_value
from connectors.mps import mps_to_dense
from connectors.sep import (
    compose_toth_w6,
    hybrid_steer_witness,
    min_over_ppt,
    optimize_sep_connector,
    ppt_output_connector,
    PAULI_BASIS,
    sample_connector_checks,
    toth_detection,
    toth_witness,
)

from conftest import ACCEPTANCE

# (certificate, context) pairs from optimal/detected outputs, audited by criterion 11
AUDIT = []


def pr_variant():
    """PR box with the output and input bits of both parties flipped."""
    T = np.zeros((2, 2, 2, 2))
    for a, b, x, y in np.ndindex(2, 2, 2, 2):
        T[a, b, x, y] = 0.5 * (((1 - a) ^ (1 - b)) == ((1 - x) & (1 - y)))
    return from_table(T, [2, 2], [2, 2], physical=True)


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_01_chsh_tree_minima():
    t0 = time.perf_counter()
    vals = {}
    for depth, target in ((1, -0.5), (2, -1.5), (3, -7.5)):
        res = ns_min_value(chsh_tree(depth))
        vals[depth] = res.value
        AUDIT.append((1, res.certificate, None))
    wall = time.perf_counter() - t0
    ok = all(abs(vals[d] - t) <= 1e-6 for d, t in ((1, -0.5), (2, -1.5), (3, -7.5))) and wall < 60
    record(1, ok, f"minima {vals}, {wall:.2f} s")


def test_criterion_02_quantum_chsh_value():
    val = float(np.sum(chsh_second_form() * tilted_pair_box("xz").standard().data))
    record(2, abs(val - (0.5 - 1 / np.sqrt(2))) <= 1e-9, f"C'' = {val:.12f}")


def test_criterion_03_hybrid_steer_witness():
    t0 = time.perf_counter()
    res = min_over_ppt(hybrid_steer_witness())
    wall = time.perf_counter() - t0
    AUDIT.append((3, res.certificate, res.problem))
    record(3, abs(res.value - (-0.0721)) <= 5e-4 and wall < 300, f"min over PPT = {res.value:.6f}, {wall:.2f} s")


def test_criterion_04_non_wiring_connector():
    W = non_wiring_connector()
    AUDIT.append((4, W.certificate, W))
    local = all(local_membership(W.apply(b)).verdict == "local" for b in all_deterministic(pr_box().scenario))
    low = float(W.apply(pr_variant()).standard().data.min())
    record(4, local and low < -1e-6, f"deterministic images local: {local}; min entry on PR variant {low:.4f}")


def test_criterion_05_mps_families_match_dense():
    t0 = time.perf_counter()
    err = 0.0
    for m in range(1, 7):
        pairs = [(majority_mps(m), majority_function)]
        if m >= 3:
            pairs.append((svetlichny_mps(m), svetlichny_function))
        pairs += [(consecutive_ones_mps(m, r), consecutive_ones_function(r)) for r in range(1, m + 1)]
        for mps, f in pairs:
            d = mps_to_dense(mps).standard().data
            err = max(err, float(np.abs(d - boolean_xor_box(f, m).standard().data).max()))
    wall = time.perf_counter() - t0
    record(5, err <= 1e-10 and wall < 30, f"max abs error {err:.2e}, {wall:.2f} s")


def _grow_run(settings_):
    t0 = time.perf_counter()
    boxes = [ghz_pauli_mps(m, settings_) for m in (5, 10, 15, 20)]
    out = mpctn.grow_family(boxes, bond=(2, 2), seed=0, max_sweeps=50, pad="copy")
    wall = time.perf_counter() - t0
    certified = all(mpctn.certify_network(net)[0] for net, _ in out)
    return {net.m: tr.final for net, tr in out}, certified, wall, out


def test_criterion_06_ghz_nonlocality():
    # the GHZ box with its default X/Z settings; see the supplementary X/Y run below
    vals, certified, wall, out = _grow_run("xz")
    for net, _ in out:
        AUDIT.extend((6, c.certificate, c) for c in net.connectors)
    ok = all(v < -1e-6 for v in vals.values()) and certified and wall < 600
    record(6, ok, f"X/Z settings values {vals}, certified {certified}, {wall:.1f} s")


@pytest.mark.parametrize("m", [3, 4, 5])
def test_supplementary_ghz_xz_box_is_local(m):
    # why criterion 6 cannot pass: with X/Z settings the GHZ box has a local model, which no LOC network can flag
    assert local_membership(mps_to_dense(ghz_pauli_mps(m, "xz"))).verdict == "local"
    assert local_membership(mps_to_dense(ghz_pauli_mps(m, "xy"))).verdict == "nonlocal"


def test_supplementary_ghz_xy_nonlocality():
    vals, certified, wall, out = _grow_run("xy")
    for net, _ in out:
        AUDIT.extend((6, c.certificate, c) for c in net.connectors)
    assert all(v < -1e-6 for v in vals.values()) and certified and wall < 600, vals


def test_criterion_07_linear_scaling():
    ms = list(range(10, 81, 10))
    cases = []
    for m in ms:
        box = ghz_pauli_mps(m, "xz")
        net = mpctn.network_for(box, seed=0)
        mpctn.evaluate(net, box)
        cases.append((net, box))
    # interleave the sizes so that a slow spell of the machine hits all of them alike
    best = [np.inf] * len(ms)
    for _ in range(30):
        for i, (net, box) in enumerate(cases):
            t0 = time.perf_counter()
            mpctn.evaluate(net, box)
            best[i] = min(best[i], time.perf_counter() - t0)
    times = best
    fit = stats.linregress(ms, times)
    r2 = fit.rvalue**2
    record(7, r2 >= 0.95, f"R^2 = {r2:.4f}, slope {1e6 * fit.slope:.1f} us per site")


def test_criterion_08_svetlichny_supra_quantum():
    t0 = time.perf_counter()
    box = svetlichny_mps(4)
    net = mpctn.network_for(box, world="QUANT", bond=(2, 2), seed=0)
    net, trace = mpctn.see_saw(net, box, max_sweeps=50)
    wall = time.perf_counter() - t0
    certified = mpctn.certify_network(net)[0]
    AUDIT.extend((8, c.certificate, c) for c in net.connectors)
    record(8, trace.final < -1e-6 and certified and wall < 1800, f"W(P) = {trace.final:.6f}, certified {certified}, {wall:.1f} s")


def test_criterion_09_fcs_detection():
    a, b = 0.5 - 1 / np.sqrt(2), 0.5 + 1 / np.sqrt(2)
    ident = {}
    for m in (2, 3, 4):
        r = mpctn.fcs_heuristic([np.eye(4)] * m, "I")
        ident[m] = r.value
        AUDIT.extend((9, c.certificate, c) for c in r.connectors)
    ident_ok = all(abs(v - a * b ** (m - 1)) <= 1e-6 for m, v in ident.items())
    counts, _ = mpctn.fcs_trials(5, 30, seed=0)
    record(9, ident_ok and counts["I"] > counts["II"], f"identity values {ident}; detections at m=5: {counts}")


def test_criterion_10_sep_soundness():
    rng = np.random.default_rng(10)
    conns = []
    S = proj(singlet())
    conns.append(optimize_sep_connector(np.kron(S.T, np.diag([1.0, 0.0])), (2, 2), 2))
    A = rng.normal(size=(16, 16))
    conns.append(ppt_output_connector(A + A.T, (2, 2), (2, 2)))
    W6, w4conn = compose_toth_w6()
    conns.append(w4conn)
    from connectors.boxes import ghz_state

    rho = proj(ghz_state(3))
    net, trace = mpctn.see_saw(mpctn.network_for(rho, world="SEP", bond=2, seed=0), rho, max_sweeps=20)
    conns.extend(net.connectors)
    worst_eig, worst_norm = np.inf, -np.inf
    for c in conns:
        for mixed in (False, True):
            e, n = sample_connector_checks(c, rng, n=500, mixed=mixed)
            worst_eig, worst_norm = min(worst_eig, e), max(worst_norm, n)
        if c.certificate is not None:
            AUDIT.append((10, c.certificate, c))
    # singlet projector (I - XX - YY - ZZ) / 4 has dyadic entries, so this trace is exact in floating point
    P = PAULI_BASIS
    singlet_proj = (np.eye(4) - sum(np.kron(s, s) for s in P[1:])) / 4
    toth = float(np.real(np.trace(toth_witness(2).matrix @ singlet_proj)))
    det = toth_detection(W6)
    AUDIT.append((10, det.info["result"].certificate, det.info["result"].info["problem"]))
    ok = worst_eig >= -1e-7 and worst_norm <= 1e-7 and toth == -1.0 and det.value < 0 and det.grid_min >= -1e-7
    record(10, ok, f"worst eigenvalue {worst_eig:.2e}, worst trace gain {worst_norm:.2e}, Toth singlet {toth}, W6 value {det.value:.4f} (grid min {det.grid_min:.1e}), GHZ3 SEP chain {trace.final:.3f}")


def test_criterion_11_certificates_verify():
    if not AUDIT:
        pytest.skip("run together with criteria 1-10")
    failures = [n for n, cert, ctx in AUDIT if not verify_certificate(cert, ctx).ok]
    record(11, not failures, f"{len(AUDIT) - len(failures)}/{len(AUDIT)} certificates re-validated; failing criteria {sorted(set(failures))}")
