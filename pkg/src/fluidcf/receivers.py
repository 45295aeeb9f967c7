"""Receive combining (MRC, P-MMSE, LP-MMSE) and n-opt LSFD weights.

Array conventions used throughout:

* ``hhat`` / ``h``: (..., K, L, NQ) channel estimates or true channels
* ``C``: (K, L, NQ, NQ) estimation-error covariances
* ``ports``: (L, N) data port of every antenna at every AP
* ``serving``: (K, L) boolean cluster mask
* combiners ``V``: (..., K, L, N), zero wherever AP ``l`` does not serve ``k``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

__all__ = [
    "select_ports",
    "select_block",
    "mrc",
    "pmmse",
    "lpmmse",
    "combiners",
    "LocalStatMoments",
    "estimate_moments",
    "nopt_lsfd",
    "partner_users",
]


def _data_index(ports, n_ports):
    ports = np.asarray(ports)
    return np.arange(ports.shape[-1]) * n_ports + ports


def select_ports(x, ports, n_ports):
    """Apply ``P_{d,l}`` to vectors ``x`` (..., L, NQ) -> (..., L, N)."""
    idx = _data_index(ports, n_ports)
    idx = np.broadcast_to(idx, x.shape[:-1] + (idx.shape[-1],))
    return np.take_along_axis(x, idx, axis=-1)


def select_block(X, ports, n_ports):
    """``P_{d,l} X P_{d,l}^T`` for matrices (..., L, NQ, NQ) -> (..., L, N, N)."""
    idx = _data_index(ports, n_ports)  # (L, N)
    L = idx.shape[0]
    lsel = np.arange(L)[:, None, None]
    return X[..., lsel, idx[:, :, None], idx[:, None, :]]


def partner_users(serving, k):
    """Users sharing at least one serving AP with user ``k``."""
    serving = np.asarray(serving, dtype=bool)
    return np.flatnonzero(np.any(serving & serving[k], axis=1))


def mrc(ports_l, hhat_kl, n_ports):
    """MR combining ``v = P_{d,l} h_hat``."""
    idx = _data_index(ports_l, n_ports)
    return np.asarray(hhat_kl)[..., idx]


def pmmse(hhat, C, ports, serving, eta_d, sigma2, k, n_ports):
    """Partial-MMSE combiner of user ``k`` over its serving cluster.

    The regularised system is assembled only over the APs that serve ``k``
    (the other blocks are zeroed by the cluster selection anyway).

    Returns
    -------
    ndarray (..., L, N)
        Zero for APs outside the cluster of ``k``.
    """
    serving = np.asarray(serving, dtype=bool)
    hhat = np.asarray(hhat)
    eta = np.asarray(eta_d, dtype=float)
    aps = np.flatnonzero(serving[k])
    partners = partner_users(serving, k)
    N = np.asarray(ports).shape[-1]
    ph = select_ports(hhat[..., aps, :], ports[aps], n_ports)  # (..., K, La, N)
    lead = ph.shape[:-3]
    La = aps.size
    H = ph[..., partners, :, :].reshape(lead + (partners.size, La * N))
    PC = select_block(C[partners][:, aps], ports[aps], n_ports)  # (S, La, N, N)
    Cblk = np.einsum("s,slab->lab", eta[partners], PC)
    Z = np.zeros((La * N, La * N), dtype=complex)
    for i in range(La):
        Z[i * N : (i + 1) * N, i * N : (i + 1) * N] = Cblk[i]
    Z += sigma2 * np.eye(La * N)
    Hw = H * np.sqrt(eta[partners])[:, None]
    system = np.einsum("...sa,...sb->...ab", Hw, Hw.conj()) + Z
    rhs = ph[..., k, :, :].reshape(lead + (La * N, 1))
    v = eta[k] * np.linalg.solve(system, rhs)[..., 0]
    out = np.zeros(lead + (serving.shape[1], N), dtype=complex)
    out[..., aps, :] = v.reshape(lead + (La, N))
    return out


def lpmmse(hhat_l, C_l, ports_l, served, eta_d, sigma2, k, n_ports):
    """Local partial-MMSE combiner at one AP for a served user ``k``.

    Parameters
    ----------
    hhat_l : (..., K, NQ)
    C_l : (K, NQ, NQ)
    served : indices of the users served by this AP
    """
    served = np.asarray(served, dtype=int)
    if k not in served:
        raise DomainError("user is not served by this AP")
    eta = np.asarray(eta_d, dtype=float)
    idx = _data_index(ports_l, n_ports)
    ph = np.asarray(hhat_l)[..., idx]  # (..., K, N)
    N = idx.size
    PC = np.asarray(C_l)[served][:, idx[:, None], idx[None, :]]
    Z = np.einsum("s,sab->ab", eta[served], PC) + sigma2 * np.eye(N)
    Hs = ph[..., served, :] * np.sqrt(eta[served])[:, None]
    system = np.einsum("...sa,...sb->...ab", Hs, Hs.conj()) + Z
    return eta[k] * np.linalg.solve(system, ph[..., k, :, None])[..., 0]


def combiners(scheme, hhat, C, ports, serving, eta_d, sigma2, n_ports):
    """Combiners of every user at every serving AP, shape (..., K, L, N)."""
    scheme = scheme.upper().replace("-", "")
    serving = np.asarray(serving, dtype=bool)
    K, L = serving.shape
    mask = serving[..., None]
    if scheme == "MRC":
        return select_ports(hhat, ports, n_ports) * mask
    if scheme == "PMMSE":
        return np.stack(
            [pmmse(hhat, C, ports, serving, eta_d, sigma2, k, n_ports) for k in range(K)],
            axis=-3,
        )
    if scheme == "LPMMSE":
        hhat = np.asarray(hhat)
        N = np.asarray(ports).shape[-1]
        out = np.zeros(hhat.shape[:-3] + (K, L, N), dtype=complex)
        eta = np.asarray(eta_d, dtype=float)
        for l in range(L):
            served = np.flatnonzero(serving[:, l])
            if served.size == 0:
                continue
            idx = _data_index(ports[l], n_ports)
            ph = hhat[..., :, l, :][..., idx]  # (..., K, N)
            PC = C[served, l][:, idx[:, None], idx[None, :]]
            Z = np.einsum("s,sab->ab", eta[served], PC) + sigma2 * np.eye(N)
            Hs = ph[..., served, :] * np.sqrt(eta[served])[:, None]
            system = np.einsum("...sa,...sb->...ab", Hs, Hs.conj()) + Z
            rhs = np.swapaxes(ph[..., served, :] * eta[served][:, None], -1, -2)
            v = np.linalg.solve(system, rhs)  # (..., N, S)
            out[..., served, l, :] = np.swapaxes(v, -1, -2)
        return out
    raise DomainError(f"unknown combining scheme {scheme!r}")


@dataclass
class LocalStatMoments:
    """Sample moments of the local effective gains ``g_kj,l = v_kl^H P_l h_jl``.

    Attributes
    ----------
    mean_g : (K, K, L)
        ``E{g_kj}``; entries for non-serving APs are exactly zero.
    second_g : (K, K, L, L)
        ``E{g_kj g_kj^H}``.
    noise : (K, L)
        Diagonal of ``F_k``: ``sigma2 E{||v_kl||^2}``.
    mean_g_stderr : (K, K, L)
        Standard error of ``mean_g``.
    serving : (K, L) bool
    n_realizations : int
    """

    mean_g: np.ndarray
    second_g: np.ndarray
    noise: np.ndarray
    mean_g_stderr: np.ndarray
    serving: np.ndarray
    n_realizations: int

    def interference(self, eta_d, k):
        """``G_k = sum_j eta_j E{g g^H} - eta_k E{g_kk} E{g_kk}^H``, PSD-repaired."""
        eta = np.asarray(eta_d, dtype=float)
        m = self.mean_g[k, k]
        G = np.einsum("j,jab->ab", eta, self.second_g[k]) - eta[k] * np.outer(m, m.conj())
        G = 0.5 * (G + G.conj().T)
        lam, U = np.linalg.eigh(G)
        if lam.min() < 0:
            G = (U * np.clip(lam, 0.0, None)) @ U.conj().T
        return G


def estimate_moments(V, channels, ports, serving, sigma2, n_ports):
    """Sample the LSFD moments over realizations.

    Parameters
    ----------
    V : (n, K, L, N)
        Local combiners per realization (zero outside clusters).
    channels : (n, K, L, NQ)
        Channels entering the effective gains (the true channels for an
        achievable bound).
    """
    n = V.shape[0]
    if n < 2:
        raise DomainError("need at least 2 realizations")
    serving = np.asarray(serving, dtype=bool)
    ph = select_ports(channels, ports, n_ports)  # (n, K, L, N)
    g = np.einsum("nkla,njla->nkjl", V.conj(), ph)
    mean_g = g.mean(axis=0)
    stderr = g.std(axis=0, ddof=1) / np.sqrt(n)
    second = np.einsum("nkjl,nkjm->kjlm", g, g.conj()) / n
    noise = sigma2 * np.mean(np.sum(np.abs(V) ** 2, axis=-1), axis=0) * serving
    return LocalStatMoments(mean_g, second, noise, stderr, serving, n)


def nopt_lsfd(moments, eta_d, k):
    """Nearly-optimal LSFD weights ``alpha_k`` (L,).

    Non-serving APs get a unit diagonal regulariser, which keeps the system
    invertible and drives their weights to zero.
    """
    eta = np.asarray(eta_d, dtype=float)
    serving = moments.serving
    partners = partner_users(serving, k)
    A = np.einsum("j,jab->ab", eta[partners], moments.second_g[k, partners])
    A = A + np.diag(moments.noise[k]) + np.diag((~serving[k]).astype(float))
    return eta[k] * np.linalg.solve(A, moments.mean_g[k, k])
