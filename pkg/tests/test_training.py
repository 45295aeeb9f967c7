import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluidcf.channel import covariance_factor, sample_channels
from fluidcf.exceptions import DomainError
from fluidcf.network import pilot_book
from fluidcf.training import (
    ap_nmse,
    build_A,
    despread,
    error_covariance,
    estimate_ap,
    fixed_port_estimate,
    gamma_matrix,
    lmmse_estimate,
    nmse_ap,
    nmse_user_ap,
    port_matrix,
    psi_matrix,
    simulate_pilot_rx,
    validate_plan,
)
from helpers import conditional_gaussian, random_psd


def explicit_A(plan, phi, Q):
    """Row ``u*N+n`` has ``phi[u]`` at column ``n*Q + plan[u, n]``."""
    tau, N = plan.shape
    A = np.zeros((tau * N, N * Q), dtype=complex)
    for u in range(tau):
        for n in range(N):
            A[u * N + n, n * Q + plan[u, n]] = phi[u]
    return A


def toy(rng, K=2, N=2, Q=2, tau=2, switching=True):
    R = np.stack([random_psd(rng, N * Q) for _ in range(K)])
    if switching:
        plan = rng.integers(0, Q, (tau, N))
    else:
        plan = np.repeat(rng.integers(0, Q, (1, N)), tau, axis=0)
    pilots = pilot_book(tau)[:K]
    eta = rng.uniform(0.5, 2.0, K)
    sigma2 = rng.uniform(0.1, 1.0)
    return R, plan, pilots, eta, sigma2


def test_port_matrix_structure():
    P = port_matrix(np.array([1, 0, 2]), 3)
    assert P.shape == (3, 9)
    assert np.array_equal(P @ P.T, np.eye(3))
    assert np.flatnonzero(P[0]).tolist() == [1]
    assert np.flatnonzero(P[2]).tolist() == [8]


def test_validate_plan_errors():
    with pytest.raises(DomainError):
        validate_plan(np.array([[0, 3]]), 3)
    with pytest.raises(DomainError):
        validate_plan(np.array([0, 1]), 3)
    with pytest.raises(DomainError):
        validate_plan(np.array([[0.0, 1.0]]), 3)


def test_build_A_matches_explicit(rng):
    for _ in range(20):
        plan = rng.integers(0, 3, (4, 2))
        phi = pilot_book(4)[rng.integers(4)]
        assert np.array_equal(build_A(plan, phi, 3), explicit_A(plan, phi, 3))


def test_build_A_examples():
    P = np.array([[1]])
    assert np.array_equal(build_A(P, np.array([1.0]), 2), port_matrix(np.array([1]), 2))
    plan = np.array([[0, 1]] * 4)
    book = pilot_book(4)
    A0, A1 = build_A(plan, book[0], 2), build_A(plan, book[1], 2)
    assert np.allclose(A0.conj().T @ A1, 0, atol=1e-12)
    Pm = port_matrix(plan[0], 2)
    assert np.allclose(A0.conj().T @ A0, 4 * Pm.T @ Pm)
    with pytest.raises(DomainError):
        build_A(plan, book[0][:3], 2)


def test_pilot_rx_noiseless(rng):
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    y = simulate_pilot_rx(np.array([[1, 0]]), h[None], np.ones((1, 1)), [2.0], 0.0, None, 2)
    assert np.allclose(y, np.sqrt(2.0) * port_matrix(np.array([1, 0]), 2) @ h)


def test_pilot_rx_covariance_matches_psi(rng):
    R, plan, pilots, eta, s2 = toy(rng, K=2, N=2, Q=2, tau=3)
    n = 10**5
    h = sample_channels(covariance_factor(R), rng, n)
    y = simulate_pilot_rx(plan, h, pilots, eta, s2, rng, 2)
    assert np.linalg.norm(y.mean(axis=0)) < 0.05
    S = y.T @ y.conj() / n
    psi = psi_matrix(plan, R, eta, pilots, s2, 2)
    assert np.linalg.norm(S - psi) <= 0.03 * np.linalg.norm(psi)


def test_psi_properties(rng):
    R, plan, pilots, eta, s2 = toy(rng)
    psi = psi_matrix(plan, R, eta, pilots, s2, 2)
    assert np.linalg.eigvalsh(psi).min() >= s2 - 1e-12
    ref = sum(eta[j] * explicit_A(plan, pilots[j], 2) @ R[j] @ explicit_A(plan, pilots[j], 2).conj().T for j in range(2))
    assert np.allclose(psi, ref + s2 * np.eye(4), atol=1e-12)
    empty = psi_matrix(plan, np.zeros((0, 4, 4)), [], np.zeros((0, 2)), s2, 2)
    assert np.allclose(empty, s2 * np.eye(4))
    with pytest.raises(DomainError):
        psi_matrix(plan, R, eta, pilots, 0.0, 2)


def test_scalar_toy_formulas():
    beta, eta, s2, y = 0.7, 2.0, 0.3, 1.3 - 0.4j
    plan = np.zeros((1, 1), dtype=int)
    R = np.array([[[beta]]])
    psi = psi_matrix(plan, R, [eta], np.ones((1, 1)), s2, 1)
    assert psi[0, 0] == pytest.approx(eta * beta + s2)
    A = build_A(plan, np.ones(1), 1)
    h = lmmse_estimate(np.array([y]), A, R[0], psi, eta)
    assert h[0] == pytest.approx(np.sqrt(eta) * beta * y / (eta * beta + s2))
    C = error_covariance(A, R[0], psi, eta)
    assert C[0, 0].real == pytest.approx(beta * s2 / (eta * beta + s2))
    G = gamma_matrix(R[0], C)
    assert G[0, 0].real == pytest.approx(eta * beta**2 / (eta * beta + s2))
    assert nmse_user_ap(C, R[0]) == pytest.approx(s2 / (eta * beta + s2))


@pytest.mark.parametrize("switching", [True, False])
def test_lmmse_joint_gaussian_oracle(rng, switching):
    for _ in range(10):
        R, plan, pilots, eta, s2 = toy(rng, switching=switching)
        K, NQ = R.shape[0], R.shape[1]
        Gs = [np.sqrt(eta[j]) * explicit_A(plan, pilots[j], 2) for j in range(K)]
        Cyy = sum(G @ R[j] @ G.conj().T for j, G in enumerate(Gs)) + s2 * np.eye(Gs[0].shape[0])
        y = rng.standard_normal(Cyy.shape[0]) + 1j * rng.standard_normal(Cyy.shape[0])
        psi = psi_matrix(plan, R, eta, pilots, s2, 2)
        est = estimate_ap(plan, R, eta, pilots, s2, 2)
        for k in range(K):
            Cxy = R[k] @ Gs[k].conj().T
            mean, explained = conditional_gaussian(Cxy, Cyy, y)
            A = build_A(plan, pilots[k], 2)
            h = lmmse_estimate(y, A, R[k], psi, eta[k])
            C = error_covariance(A, R[k], psi, eta[k])
            scale = np.linalg.norm(R[k])
            assert np.linalg.norm(h - mean) <= 1e-10 * max(np.linalg.norm(mean), 1.0)
            assert np.linalg.norm(C - (R[k] - explained)) <= 1e-10 * scale
            assert np.linalg.norm(est.estimate(y)[k] - mean) <= 1e-10 * max(np.linalg.norm(mean), 1.0)
            assert np.linalg.norm(est.C[k] - C) <= 1e-10 * scale


def test_lmmse_zero_observation(rng):
    R, plan, pilots, eta, s2 = toy(rng)
    psi = psi_matrix(plan, R, eta, pilots, s2, 2)
    A = build_A(plan, pilots[0], 2)
    assert not np.any(lmmse_estimate(np.zeros(4), A, R[0], psi, eta[0]))


def test_error_covariance_order_and_gamma(rng):
    for _ in range(10):
        R, plan, pilots, eta, s2 = toy(rng, K=3, N=2, Q=3, tau=3)
        est = estimate_ap(plan, R, eta, pilots, s2, 3)
        for k in range(3):
            assert np.linalg.eigvalsh(est.C[k]).min() >= -1e-9
            assert np.linalg.eigvalsh(R[k] - est.C[k]).min() >= -1e-9
            A = build_A(plan, pilots[k], 3)
            psi = psi_matrix(plan, R, eta, pilots, s2, 3)
            direct = eta[k] * R[k] @ A.conj().T @ np.linalg.solve(psi, A @ R[k])
            assert np.allclose(gamma_matrix(R[k], est.C[k]), direct, atol=1e-12)


def test_no_pilot_power_keeps_prior(rng):
    R, plan, pilots, eta, s2 = toy(rng)
    psi = psi_matrix(plan, R, eta, pilots, s2, 2)
    A = build_A(plan, pilots[0], 2)
    assert np.allclose(error_covariance(A, R[0], psi, 0.0), R[0])
    assert np.allclose(gamma_matrix(R[0], R[0]), 0)


def test_error_covariance_monte_carlo(rng):
    R, plan, pilots, eta, s2 = toy(rng, K=2, N=2, Q=2, tau=2)
    est = estimate_ap(plan, R, eta, pilots, s2, 2)
    n = 10**5
    h = sample_channels(covariance_factor(R), rng, n)
    y = simulate_pilot_rx(plan, h, pilots, eta, s2, rng, 2)
    hh = est.estimate(y)
    e = h[:, 0] - hh[:, 0]
    S = e.T @ e.conj() / n
    assert np.linalg.norm(S - est.C[0]) <= 0.03 * np.linalg.norm(est.C[0])
    # estimate and error are uncorrelated
    X = hh[:, 0, :, None] * e[:, None, :].conj()
    m = X.mean(axis=0)
    se = X.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(m) <= 5 * se + 1e-15)


def test_fixed_port_equivalence_random_toys(rng):
    for _ in range(100):
        N, Q = rng.integers(1, 4), rng.integers(1, 4)
        K = rng.integers(1, 4)
        tau = int(rng.integers(K, 5))
        R, plan, pilots, eta, s2 = toy(rng, K=K, N=N, Q=Q, tau=tau, switching=False)
        est = estimate_ap(plan, R, eta, pilots, s2, Q)
        y = rng.standard_normal(tau * N) + 1j * rng.standard_normal(tau * N)
        Y = y.reshape(tau, N).T
        for k in range(K):
            ydot = despread(Y, pilots[k])
            h, C = fixed_port_estimate(ydot, plan, R[k], eta[k], tau, s2, Q)
            assert np.allclose(h, est.estimate(y)[k], rtol=0, atol=1e-12 * max(1, np.abs(h).max()))
            assert np.allclose(C, est.C[k], rtol=0, atol=1e-12 * max(1, np.abs(R[k]).max()))


def test_fixed_port_rejects_switching():
    with pytest.raises(DomainError):
        fixed_port_estimate(np.zeros(1), np.array([[0], [1]]), np.eye(2), 1.0, 2, 1.0, 2)


def test_fixed_port_scalar_nmse():
    beta, eta, s2 = 0.8, 1.5, 0.4
    prev = 1.0
    for tau in [1, 2, 4, 8]:
        _, C = fixed_port_estimate(np.zeros(1), np.zeros((tau, 1), int), np.array([[beta]]), eta, tau, s2, 1)
        nm = C[0, 0].real / beta
        assert nm == pytest.approx(s2 / (tau * eta * beta + s2))
        assert nm < prev
        prev = nm


def test_nmse_bounds_and_errors(rng):
    R = random_psd(rng, 3)
    assert nmse_user_ap(R, R) == pytest.approx(1.0)
    assert nmse_user_ap(np.zeros((3, 3)), R) == 0.0
    with pytest.raises(DomainError):
        nmse_ap(np.stack([R]), np.stack([R]), [])
    with pytest.raises(DomainError):
        nmse_user_ap(R, np.zeros((3, 3)))


def test_ap_nmse_matches_full_estimation(rng):
    for _ in range(10):
        R, plan, pilots, eta, s2 = toy(rng, K=3, N=2, Q=3, tau=4)
        est = estimate_ap(plan, R, eta, pilots, s2, 3)
        served = [0, 2]
        ref = nmse_ap(est.C, R, served)
        assert ap_nmse(plan, R, served, eta, pilots, s2, 3) == pytest.approx(ref, rel=1e-10)
        batch = ap_nmse(np.stack([plan, plan]), R, served, eta, pilots, s2, 3)
        assert np.allclose(batch, ref, rtol=1e-10)


def test_nmse_invariant_to_pilot_relabeling(rng):
    for _ in range(10):
        R, plan, pilots, eta, s2 = toy(rng, K=2, N=2, Q=3, tau=3, switching=False)
        U, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
        a = ap_nmse(plan, R, [0, 1], eta, pilots, s2, 3)
        b = ap_nmse(plan, R, [0, 1], eta, pilots @ U, s2, 3)
        assert a == pytest.approx(b, rel=1e-10)


def test_nmse_invariant_to_user_phase_with_switching(rng):
    for _ in range(10):
        R, plan, pilots, eta, s2 = toy(rng, K=2, N=2, Q=3, tau=3, switching=True)
        phases = np.exp(2j * np.pi * rng.uniform(size=(2, 1)))
        a = ap_nmse(plan, R, [0, 1], eta, pilots, s2, 3)
        b = ap_nmse(plan, R, [0, 1], eta, phases * pilots, s2, 3)
        assert a == pytest.approx(b, rel=1e-10)


@given(st.integers(0, 10**6))
def test_nmse_non_increasing_in_own_pilot_power(seed):
    rng = np.random.default_rng(seed)
    R, plan, pilots, eta, s2 = toy(rng, K=2, N=2, Q=2, tau=2)
    prev = np.inf
    for p in [0.01, 0.1, 1.0, 10.0, 100.0]:
        e = eta.copy()
        e[0] = p
        est = estimate_ap(plan, R, e, pilots, s2, 2)
        v = nmse_user_ap(est.C[0], R[0])
        assert v <= prev + 1e-12
        prev = v


@given(st.integers(0, 10**6))
def test_nmse_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    R, plan, pilots, eta, s2 = toy(rng, K=3, N=2, Q=3, tau=3)
    v = ap_nmse(plan, R, [0, 1, 2], eta, pilots, s2, 3)
    assert -1e-12 <= v <= 1 + 1e-12
