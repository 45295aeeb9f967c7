"""Pilot- and data-port selection: baseline schedules, LND-PS and sum-SE AO."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import DomainError
from .training import ap_nmse

__all__ = [
    "Strategy",
    "AlgorithmConfig",
    "fixed_plan",
    "rr_plan",
    "random_plan",
    "skip_plan",
    "logdet_init",
    "LocalSearchResult",
    "lnd_ps",
    "ao_sum_se",
    "make_plan",
]


class Strategy(str, Enum):
    FPS = "FPS"
    RPS = "RPS"
    RRPS = "RRPS"
    SKIP = "SKIP"
    LNDPS = "LNDPS"
    LOGDET_INIT = "LOGDET_INIT"


@dataclass
class AlgorithmConfig:
    epsilon: float = 1e-8
    lnd_max_iter: int = 50
    ao_max_iter: int = 20

    def __post_init__(self):
        if not self.epsilon > 0 or self.lnd_max_iter < 1 or self.ao_max_iter < 1:
            raise DomainError("epsilon must be positive and iteration caps >= 1")


def fixed_plan(N, tau_p, port=0):
    """F-PS: every antenna keeps ``port`` for the whole training phase."""
    return np.full((tau_p, N), port, dtype=int)


def rr_plan(N, Q, tau_p):
    """RR-PS: at symbol ``u`` every antenna listens on port ``u mod Q``."""
    if tau_p < 1:
        raise DomainError("tau_p must be >= 1")
    return np.repeat((np.arange(tau_p) % Q)[:, None], N, axis=1)


def random_plan(N, Q, tau_p, rng):
    """R-PS: independent uniform port per antenna and symbol."""
    return rng.integers(0, Q, size=(tau_p, N))


def skip_plan(N, Q, tau_p, nu):
    """nu-skip: probe ports ``0, nu+1, 2(nu+1), ...`` with equal holds.

    Each probed port is held for ``tau_p // |S|`` consecutive symbols and the
    remainder extends the last probed port. If ``tau_p < |S|`` only the first
    ``tau_p`` probed ports get one symbol each.
    """
    if not 0 <= nu <= Q - 1:
        raise DomainError("nu must lie in [0, Q-1]")
    probed = np.arange(0, Q, nu + 1)
    if tau_p < probed.size:
        seq = probed[:tau_p]
    else:
        hold = tau_p // probed.size
        seq = np.repeat(probed, hold)
        seq = np.concatenate([seq, np.full(tau_p - seq.size, probed[-1])])
    return np.repeat(seq[:, None], N, axis=1).astype(int)


def logdet_init(R_agg, N, Q, tau_p=1):
    """Greedy block-constrained log-det port selection, held for all symbols.

    Picks one port per antenna, each step adding the (antenna, port) pair that
    maximises ``log det`` of the selected principal submatrix of ``R_agg``.
    Ties resolve to the lowest flat index. A zero aggregate (AP without users)
    falls back to port 0 on every antenna.
    """
    R_agg = np.asarray(R_agg)
    ports = np.zeros(N, dtype=int)
    if not np.any(R_agg):
        return fixed_plan(N, tau_p)
    chosen = []
    free = list(range(N))
    for _ in range(N):
        best, best_val = None, -np.inf
        for n in free:
            for q in range(Q):
                sel = chosen + [n * Q + q]
                sign, val = np.linalg.slogdet(R_agg[np.ix_(sel, sel)])
                val = val if sign > 0 else -np.inf
                if best is None or val > best_val + 1e-12:
                    best, best_val = (n, q), val
        n, q = best
        ports[n] = q
        chosen.append(n * Q + q)
        free.remove(n)
    return np.repeat(ports[None, :], tau_p, axis=0)


@dataclass
class LocalSearchResult:
    plan: np.ndarray
    objective: float
    trace: list = field(default_factory=list)
    iterations: int = 0


def lnd_ps(plan, R, served, eta_p, pilots, sigma2, n_ports, config=None):
    """Local NMSE-descent port selection for one AP.

    Sweeps symbols, antennas and ports; a single-port substitution is kept only
    if it strictly lowers the per-AP NMSE. Every candidate is compared with the
    currently accepted plan. Stops once a sweep improves by less than
    ``epsilon`` or after ``lnd_max_iter`` sweeps.

    Returns
    -------
    LocalSearchResult
        ``trace`` lists the objective after every accepted move, starting with
        the initial value.
    """
    config = config or AlgorithmConfig()
    plan = np.array(plan, dtype=int, copy=True)
    tau_p, N = plan.shape
    Q = n_ports
    current = ap_nmse(plan, R, served, eta_p, pilots, sigma2, Q)
    trace = [current]
    it = 0
    if Q == 1:
        return LocalSearchResult(plan, current, trace, 0)
    while it < config.lnd_max_iter:
        start = current
        for u in range(tau_p):
            for n in range(N):
                cands = np.repeat(plan[None], Q, axis=0)
                cands[:, u, n] = np.arange(Q)
                # all Q substitutions share every other slot, so they can be
                # scored together and replayed in order
                vals = ap_nmse(cands, R, served, eta_p, pilots, sigma2, Q)
                for q in range(Q):
                    if q != plan[u, n] and vals[q] < current:
                        plan[u, n] = q
                        current = float(vals[q])
                        trace.append(current)
        it += 1
        if abs(start - current) < config.epsilon:
            break
    return LocalSearchResult(plan, current, trace, it)


def ao_sum_se(ports, objective, n_ports, config=None):
    """Alternating optimisation of data ports for sum SE.

    Parameters
    ----------
    ports : ndarray (L, N) int
        Initial data port of each antenna at each AP.
    objective : callable
        ``objective(ports) -> per-user SE array``; its sum is maximised.
    n_ports : int

    Returns
    -------
    LocalSearchResult
        ``trace`` holds the sum SE after each sweep, starting with the initial
        value.
    """
    config = config or AlgorithmConfig()
    ports = np.array(ports, dtype=int, copy=True)
    L, N = ports.shape

    def total(p):
        return float(np.sum(objective(p)))

    current = total(ports)
    trace = [current]
    it = 0
    while True:
        it += 1
        prev = current
        for l in range(L):
            for n in range(N):
                incumbent = ports[l, n]
                best_q, best_val = incumbent, current
                for q in range(n_ports):
                    if q == incumbent:
                        continue
                    ports[l, n] = q
                    val = total(ports)
                    if val > best_val:
                        best_q, best_val = q, val
                ports[l, n] = best_q
                current = best_val
        trace.append(current)
        if (prev > 0 and abs(current - prev) / prev <= config.epsilon) or prev == current:
            break
        if it >= config.ao_max_iter:
            break
    return LocalSearchResult(ports, current, trace, it)


def make_plan(strategy, N, Q, tau_p, rng=None, nu=None, R_agg=None):
    """Construct a baseline or initial pilot plan for ``strategy``."""
    strategy = Strategy(strategy)
    if strategy is Strategy.FPS:
        return fixed_plan(N, tau_p)
    if strategy is Strategy.RRPS:
        return rr_plan(N, Q, tau_p)
    if strategy is Strategy.RPS:
        if rng is None:
            raise DomainError("random plan needs an rng")
        return random_plan(N, Q, tau_p, rng)
    if strategy is Strategy.SKIP:
        if nu is None:
            raise DomainError("skip plan needs nu")
        return skip_plan(N, Q, tau_p, nu)
    if strategy is Strategy.LOGDET_INIT:
        return logdet_init(R_agg if R_agg is not None else 0, N, Q, tau_p)
    # LND-PS starts from RR-PS when every port can be probed, else log-det
    if tau_p >= Q:
        return rr_plan(N, Q, tau_p)
    return logdet_init(R_agg if R_agg is not None else 0, N, Q, tau_p)
