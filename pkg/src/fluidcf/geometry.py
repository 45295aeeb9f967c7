"""Fluid-antenna array geometries and normalized port correlation matrices.

Each access point carries ``N`` fluid antennas (FAs) with ``Q`` ports each.
Ports are flattened antenna-major, so port ``q`` of antenna ``n`` sits at
flat position ``(n - 1) * Q + q`` (1-based) or ``n * Q + q`` (0-based).
All lengths are expressed in wavelengths.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import j0 as _bessel_j0

from .exceptions import DomainError, NumericalError

__all__ = [
    "ArrayKind",
    "ArrayGeometry",
    "AngularSpec",
    "flat_index",
    "unflatten",
    "bessel_j0",
    "spherical_j0",
    "port_positions",
    "jakes_ula",
    "jakes_upa",
    "jakes_uca",
    "jakes",
    "local_scattering",
    "psd_project",
    "correlation_matrix",
]


class ArrayKind(str, Enum):
    ULA = "ULA"
    UPA = "UPA"
    UCA = "UCA"


@dataclass(frozen=True)
class ArrayGeometry:
    """Fluid-antenna array of one access point.

    Parameters
    ----------
    kind : ArrayKind or str
        ``"ULA"``, ``"UPA"`` or ``"UCA"``.
    n_antennas : int
        Number of fluid antennas ``N``.
    n_ports : int
        Ports per antenna ``Q``.
    port_spacing : float
        Normalized port spacing ``Delta`` (wavelengths).
    fa_gap : float
        Normalized gap ``delta`` between adjacent FAs (UPA only).
    """

    kind: ArrayKind = ArrayKind.ULA
    n_antennas: int = 4
    n_ports: int = 5
    port_spacing: float = 0.5
    fa_gap: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ArrayKind(self.kind))
        if int(self.n_antennas) < 1 or int(self.n_ports) < 1:
            raise DomainError("n_antennas and n_ports must be >= 1")
        if not self.port_spacing > 0:
            raise DomainError("port_spacing must be positive")
        if self.kind is ArrayKind.UPA and not (0 <= self.fa_gap < self.port_spacing):
            raise DomainError("UPA requires 0 <= fa_gap < port_spacing")

    @property
    def n_total(self) -> int:
        return self.n_antennas * self.n_ports

    @property
    def fa_length(self) -> float:
        return self.n_ports * self.port_spacing

    @property
    def fa_diameter(self) -> float:
        return self.port_spacing - self.fa_gap

    @property
    def aperture_ula(self) -> float:
        N, D = self.n_antennas, self.port_spacing
        return N * self.fa_length + (N - 1) * D

    @property
    def aperture_upa(self) -> tuple[float, float]:
        """Vertical and horizontal apertures ``(l1, l2)``."""
        N = self.n_antennas
        return self.fa_length, (N - 1) * self.fa_gap + N * self.fa_diameter

    @property
    def aperture_uca(self) -> float:
        return 2 * (self.n_ports + 1) * self.port_spacing


@dataclass(frozen=True)
class AngularSpec:
    """Gaussian angular spread around a nominal direction (radians)."""

    azimuth: float = 0.0
    elevation: float = 0.0
    asd_azimuth: float = np.deg2rad(15.0)
    asd_elevation: float = np.deg2rad(15.0)

    def __post_init__(self):
        if not (self.asd_azimuth > 0 and self.asd_elevation > 0):
            raise DomainError("angular standard deviations must be positive")

    @classmethod
    def from_degrees(cls, azimuth=0.0, elevation=0.0, asd_azimuth=15.0, asd_elevation=15.0):
        return cls(*np.deg2rad([azimuth, elevation, asd_azimuth, asd_elevation]))


def flat_index(n: int, q: int, Q: int) -> int:
    """1-based flat port index ``(n - 1) * Q + q``."""
    if n < 1 or not 1 <= q <= Q:
        raise DomainError(f"port (n={n}, q={q}) out of range for Q={Q}")
    return (n - 1) * Q + q


def unflatten(i: int, Q: int) -> tuple[int, int]:
    """Inverse of :func:`flat_index`; returns 1-based ``(n, q)``."""
    if i < 1 or Q < 1:
        raise DomainError(f"flat index {i} out of range")
    n, q = divmod(i - 1, Q)
    return n + 1, q + 1


def bessel_j0(x):
    """Zero-order Bessel function of the first kind."""
    return _bessel_j0(x)


def spherical_j0(x):
    """Zero-order spherical Bessel function ``sin(x) / x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[small]
    x2 = xs * xs
    # Taylor branch: 1 - x^2/6 + x^4/120
    out[small] = 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    xl = x[~small]
    out[~small] = np.sin(xl) / xl
    return out if out.ndim else float(out)


def port_positions(geom: ArrayGeometry) -> np.ndarray:
    """Port centres in the array plane, shape ``(NQ, 2)`` as ``(y, z)``.

    The ULA lies on the horizontal ``y`` axis with one port per ``Delta``.
    The UPA stacks ports vertically along each FA and places FAs side by side.
    The UCA puts port ``q`` of antenna ``n`` at radius ``(q + 1/2) Delta`` and
    angle ``2 pi (n - 1) / N``.
    """
    N, Q, D = geom.n_antennas, geom.n_ports, geom.port_spacing
    n = np.repeat(np.arange(N), Q)
    q = np.tile(np.arange(Q), N)
    if geom.kind is ArrayKind.ULA:
        return np.column_stack([np.arange(N * Q) * D, np.zeros(N * Q)])
    if geom.kind is ArrayKind.UPA:
        l1, l2 = geom.aperture_upa
        v_step = l1 / (Q - 1) if Q > 1 else D
        h_step = l2 / (N - 1) if N > 1 else D
        return np.column_stack([n * h_step, q * v_step])
    radius = (q + 1 + 0.5) * D
    angle = 2 * np.pi * n / N
    return np.column_stack([radius * np.sin(angle), radius * np.cos(angle)])


def _pairwise_distance(pos):
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def jakes_ula(geom: ArrayGeometry) -> np.ndarray:
    """Jakes correlation of a fluid-antenna ULA (real symmetric).

    Entry ``(i, i')`` is ``J0(2 pi |i - i'| l_ULA / (QN + N - 2))``.
    """
    if geom.kind is not ArrayKind.ULA:
        raise DomainError("jakes_ula requires a ULA geometry")
    N, Q = geom.n_antennas, geom.n_ports
    NQ = N * Q
    if NQ == 1:
        return np.ones((1, 1))
    idx = np.arange(NQ)
    lag = np.abs(idx[:, None] - idx[None, :])
    return bessel_j0(2 * np.pi * lag * geom.aperture_ula / (Q * N + N - 2))


def jakes_upa(geom: ArrayGeometry) -> np.ndarray:
    """Jakes correlation of a fluid-antenna UPA using ``j0`` of the port distance.

    A dimension with a single element contributes no distance term.
    """
    if geom.kind is not ArrayKind.UPA:
        raise DomainError("jakes_upa requires a UPA geometry")
    return spherical_j0(2 * np.pi * _pairwise_distance(port_positions(geom)))


def jakes_uca(geom: ArrayGeometry) -> np.ndarray:
    """Jakes correlation of a fluid-antenna UCA using ``j0`` of the port distance."""
    if geom.kind is not ArrayKind.UCA:
        raise DomainError("jakes_uca requires a UCA geometry")
    return spherical_j0(2 * np.pi * _pairwise_distance(port_positions(geom)))


def jakes(geom: ArrayGeometry) -> np.ndarray:
    """Dispatch to the Jakes model matching ``geom.kind``."""
    return {ArrayKind.ULA: jakes_ula, ArrayKind.UPA: jakes_upa, ArrayKind.UCA: jakes_uca}[
        geom.kind
    ](geom)


def _truncated_gauss_rule(center, std, n_nodes, width=4.0):
    x, w = leggauss(n_nodes)
    half = width * std
    nodes = center + half * x
    weights = w * np.exp(-0.5 * ((nodes - center) / std) ** 2)
    return nodes, weights / weights.sum()


def _scattering_offsets(offsets, ang, n_nodes, chunk=16):
    phi, wphi = _truncated_gauss_rule(ang.azimuth, ang.asd_azimuth, n_nodes)
    theta, wtheta = _truncated_gauss_rule(ang.elevation, ang.asd_elevation, n_nodes)
    horiz = np.sin(phi)[:, None] * np.cos(theta)[None, :]
    vert = np.broadcast_to(np.sin(theta)[None, :], horiz.shape)
    weights = wphi[:, None] * wtheta[None, :]
    out = np.empty(len(offsets), dtype=complex)
    for s in range(0, len(offsets), chunk):
        block = offsets[s : s + chunk]
        phase = 2 * np.pi * (
            block[:, 0, None, None] * horiz[None] + block[:, 1, None, None] * vert[None]
        )
        out[s : s + chunk] = np.sum(weights[None] * np.exp(1j * phase), axis=(1, 2))
    return out


def local_scattering(
    geom: ArrayGeometry,
    ang: AngularSpec,
    n_nodes: int = 64,
    tol: float = 1e-8,
    max_nodes: int = 1024,
) -> np.ndarray:
    """Local-scattering correlation with Gaussian azimuth/elevation spreads.

    The double integral over the angular PDF is evaluated with a tensor
    Gauss-Legendre rule over +-4 ASD around the nominal angles (truncated,
    renormalized Gaussian). The node count doubles until two successive rules
    agree within ``tol``.

    Raises
    ------
    NumericalError
        If ``max_nodes`` is reached without agreement.
    """
    pos = port_positions(geom)
    diff = pos[:, None, :] - pos[None, :, :]
    flat = diff.reshape(-1, 2)
    uniq, inverse = np.unique(np.round(flat, 12), axis=0, return_inverse=True)
    coarse = _scattering_offsets(uniq, ang, n_nodes)
    n = n_nodes
    while True:
        n *= 2
        if n > max_nodes:
            raise NumericalError(
                f"local-scattering quadrature did not converge to {tol} with {max_nodes} nodes"
            )
        fine = _scattering_offsets(uniq, ang, n)
        if np.max(np.abs(fine - coarse)) <= tol:
            break
        coarse = fine
    NQ = geom.n_total
    J = fine[np.asarray(inverse).reshape(-1)].reshape(NQ, NQ)
    J = 0.5 * (J + J.conj().T)
    np.fill_diagonal(J, 1.0)
    return J


def psd_project(J: np.ndarray) -> np.ndarray:
    """Nearest-PSD repair with unit diagonal restored by symmetric rescaling."""
    J = np.asarray(J)
    H = 0.5 * (J + J.conj().T)
    lam, U = np.linalg.eigh(H)
    if lam.min() >= 0:
        return H
    P = (U * np.clip(lam, 0.0, None)) @ U.conj().T
    d = np.sqrt(np.real(np.diag(P)))
    d[d == 0] = 1.0
    P = P / d[:, None] / d[None, :]
    P = 0.5 * (P + P.conj().T)
    np.fill_diagonal(P, 1.0)
    return P if np.iscomplexobj(J) else P.real


def correlation_matrix(geom: ArrayGeometry, model: str = "jakes", ang: AngularSpec | None = None):
    """Normalized correlation ``J`` for ``model`` in {jakes, local, uncorrelated}."""
    model = model.lower()
    if model == "jakes":
        return jakes(geom)
    if model in ("local", "local_scattering"):
        return local_scattering(geom, ang if ang is not None else AngularSpec())
    if model in ("uncorrelated", "iid"):
        return np.eye(geom.n_total)
    raise DomainError(f"unknown correlation model {model!r}")
