"""Network deployment, large-scale fading and user-centric clustering."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, UnsupportedConfigurationError

__all__ = [
    "NetworkConfig",
    "Deployment",
    "pathloss_db",
    "shadowing_covariance",
    "sample_shadowing",
    "large_scale",
    "associate",
    "assign_pilots",
    "pilot_book",
    "build_covariances",
    "noise_variance",
    "nominal_angles",
    "generate_deployment",
]


@dataclass
class NetworkConfig:
    """Deployment and radio parameters (defaults follow the reference scenario)."""

    area_side: float = 400.0
    n_aps: int = 64
    n_users: int = 10
    ap_height: float = 10.0
    ue_height: float = 1.65
    carrier_ghz: float = 3.5
    bandwidth_hz: float = 20e6
    noise_figure_db: float = 7.0
    noise_psd_dbm_hz: float = -174.0
    cluster_size: int = 5
    tau_p: int = 10
    tau_c: int = 200
    eta_max_mw: float = 100.0
    shadowing_std_db: float = 4.0
    shadowing_decorrelation_m: float = 9.0
    min_distance_m: float = 1.0

    def problems(self, n_total_ports: int | None = None):
        """Return ``(field, message)`` pairs for every violated invariant."""
        out = []
        if self.n_aps < 1:
            out.append(("n_aps", "must be >= 1"))
        if self.n_users < 1:
            out.append(("n_users", "must be >= 1"))
        if self.tau_p > self.tau_c:
            out.append(("tau_p", "must not exceed tau_c"))
        if self.n_users > self.tau_p:
            out.append(("tau_p", "pilot reuse unsupported: need tau_p >= n_users"))
        if not 1 <= self.cluster_size <= self.n_aps:
            out.append(("cluster_size", "must lie in [1, n_aps]"))
        if n_total_ports is not None and n_total_ports * self.n_aps <= self.n_users:
            out.append(("n_aps", "need N*Q*L > K"))
        if self.area_side <= 0:
            out.append(("area_side", "must be positive"))
        return out


@dataclass
class Deployment:
    """One network snapshot.

    Attributes
    ----------
    ap_positions : ndarray (L, 3)
    ue_positions : ndarray (K, 3)
    beta : ndarray (K, L)
        Linear large-scale gains.
    shadowing_db : ndarray (K, L)
    serving : ndarray of bool (K, L)
        ``serving[k, l]`` is True when AP ``l`` is in the cluster of user ``k``.
    pilot_index : ndarray of int (K,)
    R : ndarray (K, L, NQ, NQ) or None
        Per-link covariances, filled by :func:`build_covariances`.
    """

    ap_positions: np.ndarray
    ue_positions: np.ndarray
    beta: np.ndarray
    shadowing_db: np.ndarray
    serving: np.ndarray
    pilot_index: np.ndarray
    R: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_users(self) -> int:
        return self.beta.shape[0]

    @property
    def n_aps(self) -> int:
        return self.beta.shape[1]

    def serving_sets(self):
        return [np.flatnonzero(row) for row in self.serving]

    def served_sets(self):
        return [np.flatnonzero(col) for col in self.serving.T]

    def to_json(self) -> str:
        doc = {
            "ap_positions": self.ap_positions.tolist(),
            "ue_positions": self.ue_positions.tolist(),
            "beta": self.beta.tolist(),
            "shadowing_db": self.shadowing_db.tolist(),
            "serving_sets": [s.tolist() for s in self.serving_sets()],
            "pilot_index": self.pilot_index.tolist(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Deployment":
        doc = json.loads(text)
        beta = np.asarray(doc["beta"], dtype=float)
        serving = np.zeros(beta.shape, dtype=bool)
        for k, aps in enumerate(doc["serving_sets"]):
            serving[k, aps] = True
        return cls(
            ap_positions=np.asarray(doc["ap_positions"], dtype=float),
            ue_positions=np.asarray(doc["ue_positions"], dtype=float),
            beta=beta,
            shadowing_db=np.asarray(doc["shadowing_db"], dtype=float),
            serving=serving,
            pilot_index=np.asarray(doc["pilot_index"], dtype=int),
        )


def pathloss_db(d3d, carrier_ghz):
    """3GPP UMi pathloss ``22.7 + 36.7 log10(d) + 26 log10(fc)`` in dB."""
    d3d = np.asarray(d3d, dtype=float)
    if np.any(d3d <= 0):
        raise DomainError("distance must be positive")
    return 22.7 + 36.7 * np.log10(d3d) + 26.0 * np.log10(carrier_ghz)


def shadowing_covariance(ue_positions, std_db=4.0, decorrelation_m=9.0):
    """User-user shadowing covariance ``std^2 * 2^(-dist / decorrelation)``."""
    pos = np.asarray(ue_positions, dtype=float)[:, :2]
    dist = np.sqrt(np.sum((pos[:, None, :] - pos[None, :, :]) ** 2, axis=-1))
    return std_db**2 * 2.0 ** (-dist / decorrelation_m)


def _symmetric_sqrt(S):
    lam, U = np.linalg.eigh(S)
    if lam.min() < -1e-9 * max(lam.max(), 1.0):
        warnings.warn("shadowing covariance not PSD; projecting", RuntimeWarning, stacklevel=3)
    return (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.T


def sample_shadowing(ue_positions, n_aps, rng, std_db=4.0, decorrelation_m=9.0):
    """Draw shadowing ``F`` of shape (K, L) in dB.

    Each AP column is an independent zero-mean Gaussian vector over users
    whose covariance decays with user separation.
    """
    ue_positions = np.atleast_2d(ue_positions)
    if ue_positions.shape[0] < 1:
        raise DomainError("need at least one user")
    S = shadowing_covariance(ue_positions, std_db, decorrelation_m)
    return _symmetric_sqrt(S) @ rng.standard_normal((S.shape[0], n_aps))


def _distances(ue_positions, ap_positions, min_distance):
    diff = ue_positions[:, None, :] - ap_positions[None, :, :]
    horiz = np.sqrt(np.sum(diff[..., :2] ** 2, axis=-1))
    horiz = np.maximum(horiz, min_distance)
    return np.sqrt(horiz**2 + diff[..., 2] ** 2)


def large_scale(config: NetworkConfig, ue_positions, ap_positions, shadowing_db):
    """Linear large-scale gains ``beta`` (K, L) from pathloss plus shadowing."""
    d3d = _distances(np.asarray(ue_positions), np.asarray(ap_positions), config.min_distance_m)
    beta_db = -pathloss_db(d3d, config.carrier_ghz) + shadowing_db
    return 10.0 ** (beta_db / 10.0)


def associate(beta, cluster_size):
    """User-centric clusters: each user keeps its ``cluster_size`` strongest APs.

    Ties go to the lower AP index. Returns a boolean (K, L) serving mask.
    """
    beta = np.atleast_2d(beta)
    K, L = beta.shape
    if not 1 <= cluster_size <= L:
        raise DomainError("cluster_size must lie in [1, L]")
    # stable sort on -beta keeps lower indices first among equal gains
    order = np.argsort(-beta, axis=1, kind="stable")[:, :cluster_size]
    serving = np.zeros((K, L), dtype=bool)
    np.put_along_axis(serving, order, True, axis=1)
    return serving


def assign_pilots(n_users, tau_p):
    """Distinct pilots ``t_k = k``; pilot reuse is not supported."""
    if tau_p < n_users:
        raise UnsupportedConfigurationError(
            f"tau_p={tau_p} < K={n_users} requires pilot reuse, which is not supported"
        )
    return np.arange(n_users)


def pilot_book(tau_p):
    """Orthogonal pilots as columns of a DFT basis: ``phi_t^T phi_t'^* = tau_p delta``.

    Returns an array of shape (tau_p, tau_p) whose row ``t`` is pilot ``t``.
    """
    u = np.arange(tau_p)
    return np.exp(-2j * np.pi * np.outer(u, u) / tau_p)


def build_covariances(beta, J):
    """Per-link covariances ``R[k, l] = beta[k, l] * J[k, l]``.

    ``J`` may be a single (NQ, NQ) matrix shared by all links or a per-link
    array of shape (K, L, NQ, NQ).
    """
    beta = np.asarray(beta, dtype=float)
    J = np.asarray(J)
    if J.ndim == 2:
        return beta[:, :, None, None] * J[None, None, :, :]
    return beta[:, :, None, None] * J


def noise_variance(config: NetworkConfig) -> float:
    """Receiver noise power in mW."""
    dbm = config.noise_psd_dbm_hz + 10 * np.log10(config.bandwidth_hz) + config.noise_figure_db
    return 10.0 ** (dbm / 10.0)


def nominal_angles(deployment: Deployment):
    """Azimuth and elevation of each user seen from each AP, arrays (K, L)."""
    diff = deployment.ue_positions[:, None, :] - deployment.ap_positions[None, :, :]
    azimuth = np.arctan2(diff[..., 1], diff[..., 0])
    elevation = np.arctan2(diff[..., 2], np.hypot(diff[..., 0], diff[..., 1]))
    return azimuth, elevation


def generate_deployment(config: NetworkConfig, rng_positions, rng_shadowing) -> Deployment:
    """Uniform AP/user drop over the square area with correlated shadowing.

    Separate generators for positions and shadowing keep each component
    reproducible on its own.
    """
    L, K, side = config.n_aps, config.n_users, config.area_side
    ap = np.column_stack([rng_positions.uniform(0, side, (L, 2)), np.full(L, config.ap_height)])
    ue = np.column_stack([rng_positions.uniform(0, side, (K, 2)), np.full(K, config.ue_height)])
    F = sample_shadowing(
        ue, L, rng_shadowing, config.shadowing_std_db, config.shadowing_decorrelation_m
    )
    beta = large_scale(config, ue, ap, F)
    return Deployment(
        ap_positions=ap,
        ue_positions=ue,
        beta=beta,
        shadowing_db=F,
        serving=associate(beta, config.cluster_size),
        pilot_index=assign_pilots(K, config.tau_p),
    )
