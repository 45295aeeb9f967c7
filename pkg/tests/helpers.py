"""Independent reference implementations used as test oracles."""

import math
import warnings

import numpy as np
from scipy.integrate import IntegrationWarning, quad


def j0_integral(x):
    """Bessel J0 from its integral form ``(1/pi) int_0^pi cos(x sin t) dt``."""
    with warnings.catch_warnings():
        # the integrand is smooth; the warning only flags the 1e-14 request
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(
            lambda t: math.cos(x * math.sin(t)), 0.0, math.pi, epsabs=1e-14, epsrel=1e-14, limit=200
        )
    return val / math.pi


def j0_series(x, terms=80):
    """Bessel J0 power series (accurate for moderate ``|x|``)."""
    return math.fsum((-1) ** m * (x / 2) ** (2 * m) / math.factorial(m) ** 2 for m in range(terms))


def random_psd(rng, n, rank=None, complex_=True):
    rank = rank or n
    X = rng.standard_normal((n, rank))
    if complex_:
        X = X + 1j * rng.standard_normal((n, rank))
    return X @ X.conj().T / rank


def conditional_gaussian(Cxy, Cyy, y):
    """Mean and covariance of x given y for zero-mean jointly Gaussian (x, y)."""
    G = Cxy @ np.linalg.inv(Cyy)
    return G @ y, G @ Cxy.conj().T


def small_context(seed=0, K=3, L=3, N=2, Q=3, tau=None, cluster=2, plan="fixed", delta=0.3, sigma2=0.3, tau_c=50):
    """Toy uplink context with Jakes correlation and user-centric clusters."""
    from fluidcf.geometry import ArrayGeometry, jakes
    from fluidcf.network import associate, pilot_book
    from fluidcf.performance import UplinkContext
    from fluidcf.ports import fixed_plan, rr_plan

    rng = np.random.default_rng(seed)
    tau = tau or K
    J = jakes(ArrayGeometry("ULA", N, Q, delta))
    beta = rng.uniform(0.2, 2.0, (K, L))
    R = beta[:, :, None, None] * J
    serving = associate(beta, cluster)
    p = fixed_plan(N, tau, 1 % Q) if plan == "fixed" else rr_plan(N, Q, tau)
    plans = np.stack([p] * L)
    eta_d = rng.uniform(0.5, 2.0, K)
    return UplinkContext(R, serving, pilot_book(tau)[:K], plans, 1.0, eta_d, sigma2, Q, tau_c)
