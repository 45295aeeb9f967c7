"""SINR and spectral-efficiency evaluation plus uplink power allocation.

Three achievable-rate expressions are provided:

* centralized: instantaneous SINR with the estimation error treated as noise,
  averaged over channel realizations
* UatF: use-and-then-forget bound, in closed form for MR combining
* distributed: per-AP local combining followed by LSFD at the CPU
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import covariance_factor, sample_channels
from .exceptions import DomainError, UnsupportedConfigurationError
from .receivers import (
    combiners,
    estimate_moments,
    nopt_lsfd,
    select_block,
    select_ports,
)
from .training import estimate_ap, simulate_pilot_rx

__all__ = [
    "PowerPolicy",
    "allocate_power",
    "prelog",
    "UplinkContext",
    "CentralizedSinrTerms",
    "centralized_terms",
    "sinr_centralized",
    "SeReport",
    "se_centralized",
    "se_centralized_from_samples",
    "UatFTerms",
    "uatf_terms",
    "uatf_closed_form",
    "uatf_monte_carlo",
    "uatf_se",
    "sinr_distributed",
    "se_distributed",
    "se_distributed_from_samples",
    "UatfObjective",
    "MonteCarloObjective",
]


class PowerPolicy(str, Enum):
    UFP = "UFP"
    FPA = "FPA"
    MMF = "MMF"


def allocate_power(policy, beta, serving, eta_max, varpi=0.0):
    """Uplink data powers ``eta_d`` (K,) in mW.

    ``UFP`` gives every user ``eta_max``. ``FPA`` scales user ``k`` by
    ``(sum_{l in L_k} beta_kl)^varpi`` relative to the largest such value among
    the users sharing an AP with ``k``.
    """
    policy = PowerPolicy(policy)
    beta = np.asarray(beta, dtype=float)
    serving = np.asarray(serving, dtype=bool)
    K = beta.shape[0]
    if policy is PowerPolicy.MMF:
        raise UnsupportedConfigurationError("max-min fair power control is not implemented")
    if np.any(beta[serving] <= 0):
        raise DomainError("large-scale gains must be positive")
    if policy is PowerPolicy.UFP or varpi == 0:
        return np.full(K, float(eta_max))
    sums = np.sum(beta * serving, axis=1) ** varpi
    share = (serving.astype(int) @ serving.T.astype(int)) > 0
    peers = np.where(share, sums[None, :], -np.inf).max(axis=1)
    return eta_max * sums / peers


def prelog(tau_p, tau_c):
    """Fraction of the coherence block left for data, ``1 - tau_p / tau_c``."""
    if not 0 <= tau_p <= tau_c or tau_c <= 0:
        raise DomainError("need 0 <= tau_p <= tau_c and tau_c > 0")
    return 1.0 - tau_p / tau_c


@dataclass
class UplinkContext:
    """Large-scale state of one snapshot: covariances, clusters, pilots, plans, powers.

    Attributes
    ----------
    R : (K, L, NQ, NQ)
    serving : (K, L) bool
    pilots : (K, tau_p)
        Pilot sequence of every user.
    plans : (L, tau_p, N) int
        Pilot-port plan of every AP.
    eta_p, eta_d : (K,)
    sigma2 : float
    n_ports : int
    tau_c : int
    """

    R: np.ndarray
    serving: np.ndarray
    pilots: np.ndarray
    plans: np.ndarray
    eta_p: np.ndarray
    eta_d: np.ndarray
    sigma2: float
    n_ports: int
    tau_c: int
    estimation: list = field(init=False, repr=False)
    factors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.serving = np.asarray(self.serving, dtype=bool)
        self.plans = np.asarray(self.plans, dtype=int)
        self.eta_p = np.broadcast_to(np.asarray(self.eta_p, dtype=float), (self.n_users,)).copy()
        self.eta_d = np.broadcast_to(np.asarray(self.eta_d, dtype=float), (self.n_users,)).copy()
        self.estimation = [
            estimate_ap(self.plans[l], self.R[:, l], self.eta_p, self.pilots, self.sigma2, self.n_ports)
            for l in range(self.n_aps)
        ]
        self.factors = covariance_factor(self.R)

    @property
    def n_users(self) -> int:
        return self.R.shape[0]

    @property
    def n_aps(self) -> int:
        return self.R.shape[1]

    @property
    def n_antennas(self) -> int:
        return self.plans.shape[-1]

    @property
    def tau_p(self) -> int:
        return self.pilots.shape[1]

    @property
    def prelog(self) -> float:
        return prelog(self.tau_p, self.tau_c)

    @property
    def C(self):
        return np.stack([e.C for e in self.estimation], axis=1)

    @property
    def Gamma(self):
        return np.stack([e.Gamma for e in self.estimation], axis=1)

    def draw(self, n, rng_channels, rng_noise):
        """Sample ``n`` channel realizations and their LMMSE estimates.

        Returns
        -------
        h, hhat : ndarray (n, K, L, NQ)
        """
        h = sample_channels(self.factors, rng_channels, n)
        hhat = np.empty_like(h)
        for l, est in enumerate(self.estimation):
            y = simulate_pilot_rx(
                self.plans[l], h[:, :, l, :], self.pilots, self.eta_p, self.sigma2, rng_noise, self.n_ports
            )
            hhat[:, :, l, :] = est.estimate(y)
        return h, hhat


@dataclass
class CentralizedSinrTerms:
    """Terms of the centralized SINR for every user and realization.

    Attributes
    ----------
    gains : (..., K, K)
        ``sum_l v_kl^H P_l h_hat_jl`` for user ``k`` and interferer ``j``.
    varsigma : (..., K)
        Noise plus estimation-error term ``sum_l v^H (sum_j eta_j P C_jl P^T + sigma2 I) v``.
    """

    gains: np.ndarray
    varsigma: np.ndarray

    def sinr(self, eta_d):
        eta = np.asarray(eta_d, dtype=float)
        p = np.abs(self.gains) ** 2 * eta
        desired = np.diagonal(p, axis1=-2, axis2=-1)
        interference = p.sum(axis=-1) - desired
        return desired / (interference + self.varsigma)


def centralized_terms(V, hhat, C, ports, eta_d, sigma2, n_ports):
    """Assemble :class:`CentralizedSinrTerms` from combiners ``V`` (..., K, L, N)."""
    ph = select_ports(hhat, ports, n_ports)
    gains = np.einsum("...kla,...jla->...kj", V.conj(), ph)
    PC = select_block(C, ports, n_ports)  # (K, L, N, N)
    N = V.shape[-1]
    Z = np.einsum("j,jlab->lab", np.asarray(eta_d, dtype=float), PC) + sigma2 * np.eye(N)
    varsigma = np.real(np.einsum("...kla,lab,...klb->...k", V.conj(), Z, V))
    return CentralizedSinrTerms(gains, varsigma)


def sinr_centralized(V, hhat, C, ports, eta_d, sigma2, n_ports, k=None):
    """Centralized instantaneous SINR; all users, or user ``k`` only."""
    s = centralized_terms(V, hhat, C, ports, eta_d, sigma2, n_ports).sinr(eta_d)
    return s if k is None else s[..., k]


@dataclass
class SeReport:
    """Per-user spectral efficiency.

    Attributes
    ----------
    se : (K,)
        SE in bit/s/Hz.
    se_stderr : (K,)
        Monte Carlo standard error (zero for deterministic bounds).
    sinr : ndarray
        SINR samples (n, K) or deterministic SINR (K,).
    prelog : float
    mode : str
        ``"centralized"``, ``"distributed"`` or ``"uatf"``.
    """

    se: np.ndarray
    se_stderr: np.ndarray
    sinr: np.ndarray
    prelog: float
    mode: str
    scheme: str = "MRC"


def se_centralized(ctx: UplinkContext, ports, scheme, n_realizations, rng_channels, rng_noise, k=None):
    """Monte Carlo SE ``prelog * E{log2(1 + SINR)}`` of centralized processing.

    Each realization redraws channels and pilot noise and rebuilds the estimates
    and combiners.
    """
    if n_realizations < 1:
        raise DomainError("n_realizations must be >= 1")
    h, hhat = ctx.draw(n_realizations, rng_channels, rng_noise)
    rep = se_centralized_from_samples(ctx, ports, scheme, hhat)
    if k is not None:
        return float(rep.se[k])
    return rep


def se_centralized_from_samples(ctx, ports, scheme, hhat):
    """Centralized SE report from pre-drawn estimates ``hhat`` (n, K, L, NQ)."""
    C = ctx.C
    V = combiners(scheme, hhat, C, ports, ctx.serving, ctx.eta_d, ctx.sigma2, ctx.n_ports)
    sinr = sinr_centralized(V, hhat, C, ports, ctx.eta_d, ctx.sigma2, ctx.n_ports)
    rates = ctx.prelog * np.log2(1.0 + sinr)
    n = rates.shape[0]
    stderr = rates.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(rates.shape[1])
    return SeReport(rates.mean(axis=0), stderr, sinr, ctx.prelog, "centralized", scheme)


@dataclass
class UatFTerms:
    """Closed-form UatF terms for MR combining.

    ``den = sum_j eta_j intf[k, j] - num + noise``.
    """

    num: np.ndarray
    intf: np.ndarray
    noise: np.ndarray
    den: np.ndarray

    @property
    def sinr(self):
        return self.num / self.den


def _check_pilots(pilot_index):
    if pilot_index is None:
        return
    pilot_index = np.asarray(pilot_index)
    if np.unique(pilot_index).size != pilot_index.size:
        raise UnsupportedConfigurationError("closed-form UatF requires orthogonal pilots (tau_p >= K)")


def uatf_terms(Gamma, R, ports, eta_d, sigma2, serving, n_ports, pilot_index=None):
    """Closed-form UatF terms for every user under MR combining.

    With ``a_kl = tr(P Gamma_kl P^T)`` and
    ``b_kjl = tr(P R_jl P^T P Gamma_kl P^T)``, the interference of user ``j`` on
    ``k`` is ``sum_l b_kjl`` plus ``|sum_l a_kl|^2`` when ``j == k``.

    Raises
    ------
    UnsupportedConfigurationError
        If ``pilot_index`` reveals shared pilots.
    """
    _check_pilots(pilot_index)
    serving = np.asarray(serving, dtype=bool)
    eta = np.asarray(eta_d, dtype=float)
    G = select_block(Gamma, ports, n_ports)
    Rs = select_block(R, ports, n_ports)
    a = np.real(np.trace(G, axis1=-2, axis2=-1)) * serving  # (K, L)
    b = np.real(np.einsum("jlab,klba->kjl", Rs, G)) * serving[:, None, :]
    A = a.sum(axis=1)
    intf = b.sum(axis=2)
    intf[np.diag_indices_from(intf)] += A**2
    num = eta * A**2
    noise = sigma2 * A
    den = intf @ eta - num + noise
    return UatFTerms(num, intf, noise, den)


def uatf_closed_form(Gamma, R, ports, eta_d, sigma2, serving, n_ports, k=None, pilot_index=None):
    """Closed-form UatF SINR under MR combining; all users, or user ``k``."""
    s = uatf_terms(Gamma, R, ports, eta_d, sigma2, serving, n_ports, pilot_index).sinr
    return s if k is None else float(s[k])


def uatf_monte_carlo(V, h, ports, eta_d, sigma2, n_ports):
    """UatF SINR with every expectation replaced by a sample mean.

    Parameters
    ----------
    V : (n, K, L, N)
        Combiners (zero outside clusters).
    h : (n, K, L, NQ)
        True channels.
    """
    eta = np.asarray(eta_d, dtype=float)
    ph = select_ports(h, ports, n_ports)
    g = np.einsum("nkla,njla->nkj", V.conj(), ph)
    mean_kk = np.diagonal(g.mean(axis=0))
    num = eta * np.abs(mean_kk) ** 2
    power = np.mean(np.abs(g) ** 2, axis=0) @ eta
    noise = sigma2 * np.mean(np.sum(np.abs(V) ** 2, axis=(-2, -1)), axis=0)
    return num / (power - num + noise)


def uatf_se(sinr, tau_p, tau_c):
    """``(1 - tau_p / tau_c) * log2(1 + SINR)``."""
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise DomainError("SINR must be nonnegative")
    return prelog(tau_p, tau_c) * np.log2(1.0 + sinr)


def sinr_distributed(moments, alpha, eta_d, k):
    """Distributed SINR ``eta_k |alpha^H E g_kk|^2 / alpha^H (G_k + F_k) alpha``."""
    eta = np.asarray(eta_d, dtype=float)
    alpha = np.asarray(alpha)
    num = eta[k] * np.abs(np.vdot(alpha, moments.mean_g[k, k])) ** 2
    M = moments.interference(eta, k) + np.diag(moments.noise[k])
    den = np.real(np.vdot(alpha, M @ alpha))
    if not den > 0:
        raise DomainError("distributed SINR denominator is zero")
    return float(num / den)


def se_distributed_from_samples(ctx, ports, scheme, h, hhat):
    """Distributed SE report from pre-drawn channels and estimates."""
    C = ctx.C
    V = combiners(scheme, hhat, C, ports, ctx.serving, ctx.eta_d, ctx.sigma2, ctx.n_ports)
    mom = estimate_moments(V, h, ports, ctx.serving, ctx.sigma2, ctx.n_ports)
    sinr = np.array(
        [sinr_distributed(mom, nopt_lsfd(mom, ctx.eta_d, k), ctx.eta_d, k) for k in range(ctx.n_users)]
    )
    se = ctx.prelog * np.log2(1.0 + sinr)
    return SeReport(se, np.zeros_like(se), sinr, ctx.prelog, "distributed", scheme)


def se_distributed(ctx: UplinkContext, ports, scheme, n_realizations, rng_channels, rng_noise, k=None):
    """SE of local combining with n-opt LSFD.

    The LSFD moments are sample averages over ``n_realizations`` draws; given
    these the SINR is deterministic, so the SE needs no further averaging.
    """
    h, hhat = ctx.draw(n_realizations, rng_channels, rng_noise)
    rep = se_distributed_from_samples(ctx, ports, scheme, h, hhat)
    if k is not None:
        return float(rep.se[k])
    return rep


class UatfObjective:
    """Per-user UatF SE of a data-port configuration; deterministic."""

    def __init__(self, ctx: UplinkContext):
        self.ctx = ctx
        self.Gamma = ctx.Gamma
        self.calls = 0

    def __call__(self, ports):
        self.calls += 1
        c = self.ctx
        sinr = uatf_terms(self.Gamma, c.R, ports, c.eta_d, c.sigma2, c.serving, c.n_ports).sinr
        return c.prelog * np.log2(1.0 + sinr)


class MonteCarloObjective:
    """Per-user SE under a sampled bound on a frozen set of realizations.

    Freezing the channels and pilot noise (common random numbers) makes the
    objective deterministic in the ports, which keeps the AO monotone.

    Parameters
    ----------
    bound : {"c", "d"}
        Centralized instantaneous bound or distributed LSFD bound.
    """

    def __init__(self, ctx, scheme, bound, n_realizations, rng_channels, rng_noise):
        if bound not in ("c", "d"):
            raise DomainError("bound must be 'c' or 'd'")
        if bound == "d" and n_realizations < 2:
            raise DomainError("distributed bound needs at least 2 realizations")
        self.ctx, self.scheme, self.bound = ctx, scheme, bound
        self.h, self.hhat = ctx.draw(n_realizations, rng_channels, rng_noise)

    def __call__(self, ports):
        if self.bound == "c":
            return se_centralized_from_samples(self.ctx, ports, self.scheme, self.hhat).se
        return se_distributed_from_samples(self.ctx, ports, self.scheme, self.h, self.hhat).se
