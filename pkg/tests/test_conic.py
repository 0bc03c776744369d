import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from connectors.boxes import all_deterministic, pr_box
from connectors.conic import Certificate, LinearProgram, Model, SemidefiniteProgram, solve_lp, solve_sdp, verify_certificate
from connectors.linalg import PAULIS, partial_transpose, singlet, proj


@pytest.mark.parametrize("backend", ["highs", "simplex"])
def test_lp_single_bound(backend):
    p = LinearProgram([1.0], [[1.0]], [3.0])
    res = solve_lp(p, backend=backend)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(3.0, abs=1e-9)
    assert verify_certificate(res.certificate, p).ok


@pytest.mark.parametrize("backend", ["highs", "simplex"])
def test_lp_box_corner(backend):
    p = LinearProgram([-1.0, -1.0], np.eye(2), [1.0, 1.0], "<=", lb=0.0)
    status, x, dual = solve_lp(p, backend=backend)
    assert status == "optimal"
    assert np.allclose(x, [1.0, 1.0], atol=1e-9)
    assert verify_certificate(solve_lp(p, backend=backend).certificate, p).ok


@pytest.mark.parametrize("backend", ["highs", "simplex"])
def test_pr_box_outside_local_polytope(backend):
    # mixture weights over the 16 deterministic boxes must reproduce the PR box
    V = np.array([b.standard().data.ravel() for b in all_deterministic(pr_box().scenario)]).T
    p = LinearProgram(np.zeros(V.shape[1]), V, pr_box().standard().data.ravel(), "=", lb=0.0)
    res = solve_lp(p, backend=backend)
    assert res.status == "infeasible"
    assert verify_certificate(res.certificate, p).ok


def test_lp_dual_zero_multipliers_for_zero_objective():
    p = LinearProgram(np.zeros(2), np.eye(2), np.zeros(2), ">=")
    cert = Certificate("lp-dual", {"x": np.zeros(2), "y": np.zeros(2), "r": np.zeros(2)})
    assert verify_certificate(cert, p).ok


def test_unbounded_lp_reports_ray():
    p = LinearProgram([-1.0], [[1.0]], [0.0], ">=")
    res = solve_lp(p)
    assert res.status == "unbounded"
    assert verify_certificate(res.certificate, p).ok


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_lp_row_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(6, 3))
    b = -rng.uniform(1, 2, size=6)
    c = rng.normal(size=3)
    p = LinearProgram(c, A, b, ">=", lb=-5, ub=5)
    perm = rng.permutation(6)
    q = LinearProgram(c, A[perm], b[perm], ">=", lb=-5, ub=5)
    r1, r2 = solve_lp(p), solve_lp(q)
    assert r1.status == r2.status == "optimal"
    assert abs(r1.objective - r2.objective) <= 1e-8
    assert verify_certificate(r1.certificate, p).ok and verify_certificate(r2.certificate, q).ok


@pytest.mark.parametrize("backend", ["clarabel", "native"])
def test_sdp_spectral_norm_of_sigma_x(backend):
    # min t  s.t.  t I - X >= 0
    X = PAULIS["x"].real
    p = SemidefiniteProgram([1.0], [(-X, sp.csr_matrix(np.eye(2).reshape(4, 1)))])
    res = solve_sdp(p, backend=backend)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(1.0, abs=1e-7)
    assert verify_certificate(res.certificate, p).ok


def test_sdp_perturbed_dual_is_rejected():
    X = PAULIS["x"].real
    p = SemidefiniteProgram([1.0], [(-X, sp.csr_matrix(np.eye(2).reshape(4, 1)))])
    res = solve_sdp(p)
    cert = res.certificate
    Z = [np.asarray(z, dtype=float) - 2 * max(cert.tol, 1e-6) * np.eye(2) for z in cert.payload["Z"]]
    bad = Certificate(cert.kind, {**cert.payload, "Z": Z}, cert.tol, cert.meta)
    assert not verify_certificate(bad, p).ok


def test_sdp_chsh_operator_matches_eigenvalue():
    X, Z = PAULIS["x"].real, PAULIS["z"].real
    A0, A1 = Z, X
    B0, B1 = (Z + X) / np.sqrt(2), (Z - X) / np.sqrt(2)
    bell = np.kron(A0, B0) + np.kron(A0, B1) + np.kron(A1, B0) - np.kron(A1, B1)
    m = Model()
    rho = m.herm(4, real=True)
    m.psd(rho)
    m.eq(rho.trace(), 1.0)
    m.maximize(rho.inner(bell))
    res = m.solve()
    assert res.status == "optimal"
    # maximize stores the negated objective
    assert -res.objective == pytest.approx(np.linalg.eigvalsh(bell)[-1], abs=1e-6)
    assert np.linalg.eigvalsh(bell)[-1] == pytest.approx(2 * np.sqrt(2))


def test_singlet_is_not_ppt_feasible():
    S = proj(singlet())
    assert np.linalg.eigvalsh(partial_transpose(S, [2, 2], [0]))[0] == pytest.approx(-0.5)
    m = Model()
    rho = m.herm(4, real=True)
    m.psd(rho)
    m.psd(rho.partial_transpose([2, 2], [0]))
    m.eq(rho.re, S.real)
    res = m.solve()
    assert res.status == "infeasible"
