"""Correlated Rayleigh channel sampling."""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError

__all__ = ["covariance_factor", "complex_normal", "sample_channels"]


def covariance_factor(R, rtol=1e-12):
    """Hermitian square root ``B`` with ``B B^H = R``.

    Eigenvalues below ``rtol * lambda_max`` are clamped to zero. Works on a
    single matrix or a stack (..., M, M).
    """
    R = np.asarray(R)
    if not np.allclose(R, np.conj(np.swapaxes(R, -1, -2)), rtol=1e-10, atol=1e-12 * np.max(np.abs(R), initial=0.0)):
        raise DomainError("covariance must be Hermitian")
    lam, U = np.linalg.eigh(R)
    floor = rtol * np.max(lam, axis=-1, keepdims=True)
    lam = np.where(lam < floor, 0.0, lam)
    return (U * np.sqrt(lam)[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))


def complex_normal(rng, shape):
    """Standard circular complex Gaussian samples (variance 1/2 per component)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channels(factors, rng, n_realizations=None):
    """Draw ``h = B w`` with ``w ~ CN(0, I)`` for every link.

    Parameters
    ----------
    factors : ndarray (..., NQ, NQ)
        Covariance factors, e.g. shape (K, L, NQ, NQ).
    rng : numpy.random.Generator
    n_realizations : int, optional
        When given a leading realization axis is added.

    Returns
    -------
    ndarray
        ``(..., NQ)`` or ``(n_realizations, ..., NQ)``.
    """
    factors = np.asarray(factors)
    lead = factors.shape[:-1] if n_realizations is None else (n_realizations,) + factors.shape[:-1]
    w = complex_normal(rng, lead)
    return np.einsum("...ij,...j->...i", factors, w)
