"""Uplink pilot reception with per-symbol port switching and LMMSE estimation.

A pilot-port plan for one AP is an integer array ``plan`` of shape
``(tau_p, N)``: ``plan[u, n]`` is the 0-based port of antenna ``n`` while
pilot symbol ``u`` is received. The binary selection matrix ``P(u)`` of
shape ``(N, NQ)`` follows from :func:`port_matrix`. Stacked observations are
u-major: entry ``u * N + n`` of the stacked vector is antenna ``n`` at symbol
``u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .channel import complex_normal
from .exceptions import DomainError, NumericalError

__all__ = [
    "validate_plan",
    "port_matrix",
    "observed_ports",
    "build_A",
    "simulate_pilot_rx",
    "psi_matrix",
    "lmmse_estimate",
    "error_covariance",
    "gamma_matrix",
    "despread",
    "fixed_port_estimate",
    "nmse_user_ap",
    "nmse_ap",
    "ApEstimation",
    "estimate_ap",
    "ap_nmse",
]


def validate_plan(plan, n_ports):
    """Check a port plan and return it as an int array of shape (tau_p, N)."""
    plan = np.asarray(plan)
    if plan.ndim != 2:
        raise DomainError("plan must have shape (tau_p, N)")
    if not np.issubdtype(plan.dtype, np.integer):
        raise DomainError("plan entries must be integer port indices")
    if plan.size and (plan.min() < 0 or plan.max() >= n_ports):
        raise DomainError(f"port index outside [0, {n_ports})")
    return plan


def port_matrix(ports, n_ports):
    """Binary ``(N, NQ)`` selection matrix for one port per antenna."""
    ports = np.asarray(ports)
    N = ports.shape[-1]
    P = np.zeros(ports.shape[:-1] + (N, N * n_ports))
    cols = np.arange(N) * n_ports + ports
    np.put_along_axis(P, cols[..., None], 1.0, axis=-1)
    return P


def observed_ports(plan, n_ports):
    """Flat 0-based port index of every stacked observation (u-major)."""
    plan = np.asarray(plan)
    N = plan.shape[-1]
    idx = np.arange(N) * n_ports + plan
    return idx.reshape(plan.shape[:-2] + (-1,))


def _phase(plan, pilots):
    # pilot value multiplying each stacked observation, shape (..., K, tau_p*N)
    N = np.asarray(plan).shape[-1]
    return np.repeat(np.asarray(pilots), N, axis=-1)


def build_A(plan, phi, n_ports):
    """Stack ``[phi]_u P(u)`` over pilot symbols; shape ``(N tau_p, NQ)``."""
    plan = validate_plan(plan, n_ports)
    phi = np.asarray(phi)
    if phi.shape != (plan.shape[0],):
        raise DomainError(f"pilot length {phi.shape} does not match plan length {plan.shape[0]}")
    P = port_matrix(plan, n_ports)  # (tau_p, N, NQ)
    return (phi[:, None, None] * P).reshape(-1, P.shape[-1])


def simulate_pilot_rx(plan, h, pilots, eta_p, sigma2, rng, n_ports):
    """Received stacked pilot vector at one AP.

    Parameters
    ----------
    plan : (tau_p, N) int
    h : ndarray (..., K, NQ)
        User channels to this AP; leading axes are realizations.
    pilots : ndarray (K, tau_p)
        Pilot of every user.
    eta_p : array (K,)
    sigma2 : float
    rng : numpy.random.Generator or None
        ``None`` gives a noiseless observation.

    Returns
    -------
    ndarray (..., N tau_p)
    """
    plan = validate_plan(plan, n_ports)
    idx = observed_ports(plan, n_ports)
    ph = _phase(plan, pilots)  # (K, M)
    amp = np.sqrt(np.asarray(eta_p, dtype=float))
    y = np.einsum("k,km,...km->...m", amp, ph, h[..., idx])
    if rng is not None and sigma2 > 0:
        # P(u) z_u keeps N of the NQ i.i.d. noise entries, i.e. CN(0, sigma2 I_N)
        y = y + np.sqrt(sigma2) * complex_normal(rng, y.shape)
    return y


def psi_matrix(plan, R, eta_p, pilots, sigma2, n_ports):
    """Observation covariance ``sum_j eta_j A_j R_j A_j^H + sigma2 I``.

    ``R`` has shape (K, NQ, NQ); ``pilots`` has shape (K, tau_p).
    """
    if not sigma2 > 0:
        raise DomainError("noise variance must be positive")
    plan = validate_plan(plan, n_ports)
    idx = observed_ports(plan, n_ports)
    M = idx.size
    R = np.asarray(R)
    psi = sigma2 * np.eye(M, dtype=complex)
    if R.shape[0] == 0:
        return psi
    ph = _phase(plan, pilots)
    Rsub = R[:, idx[:, None], idx[None, :]]
    weights = np.asarray(eta_p, dtype=float)[:, None, None] * ph[:, :, None] * ph[:, None, :].conj()
    return psi + np.sum(weights * Rsub, axis=0)


def _cho(psi):
    try:
        return sla.cho_factor(psi, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("observation covariance is not positive definite") from exc


def lmmse_estimate(y, A, R, psi, eta_p):
    """LMMSE estimate ``sqrt(eta) R A^H Psi^-1 y`` (``y`` may carry leading axes)."""
    c = _cho(psi)
    y = np.asarray(y)
    z = sla.cho_solve(c, np.moveaxis(y, -1, 0).reshape(y.shape[-1], -1))
    est = np.sqrt(eta_p) * (R @ A.conj().T @ z)
    return np.moveaxis(est.reshape((R.shape[0],) + y.shape[:-1]), 0, -1)


def error_covariance(A, R, psi, eta_p):
    """Estimation-error covariance ``R - eta R A^H Psi^-1 A R``."""
    AR = A @ R
    C = R - eta_p * AR.conj().T @ sla.cho_solve(_cho(psi), AR)
    return 0.5 * (C + C.conj().T)


def gamma_matrix(R, C):
    """Estimate covariance ``Gamma = R - C``."""
    return R - C


def despread(Y, phi):
    """Correlate an ``(N, tau_p)`` pilot block with ``phi^* / sqrt(tau_p)``."""
    phi = np.asarray(phi)
    return np.asarray(Y) @ phi.conj() / np.sqrt(phi.size)


def fixed_port_estimate(ydot, plan, R, eta_p, tau_p, sigma2, n_ports):
    """Estimate for a plan that keeps the same ports over all pilot symbols.

    Only the user's own pilot contributes to the despread observation, so
    ``Psi = tau_p eta P R P^H + sigma2 P P^H``.

    Returns
    -------
    h_hat : ndarray (NQ,)
    C : ndarray (NQ, NQ)
    """
    plan = validate_plan(plan, n_ports)
    if np.any(plan != plan[0]):
        raise DomainError("fixed-port estimate requires a constant plan")
    P = port_matrix(plan[0], n_ports)
    PR = P @ R
    psi = tau_p * eta_p * PR @ P.T + sigma2 * (P @ P.T)
    c = _cho(psi)
    h_hat = np.sqrt(tau_p * eta_p) * PR.conj().T @ sla.cho_solve(c, ydot)
    C = R - tau_p * eta_p * PR.conj().T @ sla.cho_solve(c, PR)
    return h_hat, 0.5 * (C + C.conj().T)


def nmse_user_ap(C, R):
    """``tr(C) / tr(R)``."""
    tr_r = np.real(np.trace(R))
    if not tr_r > 0:
        raise DomainError("tr(R) must be positive")
    return float(np.real(np.trace(C)) / tr_r)


def nmse_ap(C, R, served):
    """Mean of the per-user NMSE over the users served by an AP."""
    served = list(served)
    if not served:
        raise DomainError("AP serves no users")
    return float(np.mean([nmse_user_ap(C[k], R[k]) for k in served]))


@dataclass
class ApEstimation:
    """Estimation statistics of every user at one AP.

    Attributes
    ----------
    psi : (M, M)
    A : (K, M, NQ)
    W : (K, NQ, M)
        Estimator matrices, ``h_hat_k = W_k y``.
    C, Gamma : (K, NQ, NQ)
    """

    psi: np.ndarray
    A: np.ndarray
    W: np.ndarray
    C: np.ndarray
    Gamma: np.ndarray

    def estimate(self, y):
        """Estimates of all users from observations ``y`` (..., M) -> (..., K, NQ)."""
        return np.einsum("kqm,...m->...kq", self.W, y)


def estimate_ap(plan, R, eta_p, pilots, sigma2, n_ports):
    """Build ``Psi``, estimators and error covariances for one AP."""
    plan = validate_plan(plan, n_ports)
    K = R.shape[0]
    psi = psi_matrix(plan, R, eta_p, pilots, sigma2, n_ports)
    A = np.stack([build_A(plan, pilots[k], n_ports) for k in range(K)])
    AR = A @ R  # (K, M, NQ)
    c = _cho(psi)
    M = psi.shape[0]
    X = sla.cho_solve(c, np.moveaxis(AR, 0, 1).reshape(M, -1))
    X = np.moveaxis(X.reshape(M, K, -1), 1, 0)  # Psi^-1 A_k R_k
    eta = np.asarray(eta_p, dtype=float)
    W = np.sqrt(eta)[:, None, None] * np.conj(np.swapaxes(X, 1, 2))
    Gamma = eta[:, None, None] * np.conj(np.swapaxes(AR, 1, 2)) @ X
    Gamma = 0.5 * (Gamma + np.conj(np.swapaxes(Gamma, 1, 2)))
    C = R - Gamma
    return ApEstimation(psi=psi, A=A, W=W, C=C, Gamma=Gamma)


def ap_nmse(plans, R, served, eta_p, pilots, sigma2, n_ports):
    """Per-AP NMSE for one plan or a batch of plans (B, tau_p, N).

    This is the objective minimised by the pilot-port search; it avoids
    forming full covariance matrices.
    """
    plans = np.asarray(plans)
    single = plans.ndim == 2
    if single:
        plans = plans[None]
    served = np.asarray(served, dtype=int)
    if served.size == 0:
        raise DomainError("AP serves no users")
    idx = observed_ports(plans, n_ports)  # (B, M)
    B, M = idx.shape
    eta = np.asarray(eta_p, dtype=float)
    ph = np.repeat(np.asarray(pilots), plans.shape[-1], axis=-1)  # (K, M)
    Rsub = R[:, idx[:, :, None], idx[:, None, :]]  # (K, B, M, M)
    wts = eta[:, None, None] * ph[:, :, None] * ph[:, None, :].conj()  # (K, M, M)
    psi = np.einsum("kij,kbij->bij", wts, Rsub) + sigma2 * np.eye(M)
    Rs = R[served]
    G = ph[served][:, None, :, None] * Rs[:, idx, :]  # (S, B, M, NQ)
    S, NQ = len(served), R.shape[-1]
    rhs = np.moveaxis(G, 0, 2).reshape(B, M, S * NQ)
    X = np.linalg.solve(psi, rhs)
    prod = np.real(np.conj(rhs) * X).reshape(B, M, S, NQ).sum(axis=(1, 3))  # (B, S)
    tr_r = np.real(np.trace(Rs, axis1=-2, axis2=-1))
    nmse = 1.0 - eta[served][None, :] * prod / tr_r[None, :]
    out = nmse.mean(axis=1)
    return float(out[0]) if single else out
