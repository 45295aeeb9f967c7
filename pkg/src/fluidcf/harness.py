"""Monte Carlo campaigns over deployments, CDF aggregation, sweeps and export."""

from __future__ import annotations

import copy
import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .exceptions import DomainError
from .geometry import correlation_matrix, local_scattering
from .network import (
    build_covariances,
    generate_deployment,
    nominal_angles,
    noise_variance,
    pilot_book,
)
from .performance import (
    MonteCarloObjective,
    UatfObjective,
    UplinkContext,
    se_centralized_from_samples,
    se_distributed_from_samples,
    allocate_power,
)
from .ports import Strategy, ao_sum_se, lnd_ps, make_plan
from .training import ap_nmse

__all__ = [
    "STREAMS",
    "stream",
    "CampaignResult",
    "snapshot_covariances",
    "snapshot_plans",
    "run_nmse_campaign",
    "run_se_campaign",
    "run_sweep",
    "optimize_ports",
    "export",
    "empirical_cdf",
    "NMSE_COLUMNS",
    "SE_COLUMNS",
    "SWEEP_COLUMNS",
]

# fixed labels keep each random component reproducible on its own
STREAMS = {"deployment": 0, "shadowing": 1, "channels": 2, "noise": 3, "plans": 4, "data_ports": 5}

NMSE_COLUMNS = ("snapshot", "ap", "strategy", "nmse")
SE_COLUMNS = ("snapshot", "user", "scheme", "mode", "bound", "power_policy", "se_bps_hz")
SWEEP_COLUMNS = ("axis", "value", "strategy", "mean_nmse", "stderr", "n_samples")


def stream(seed, label, *keys):
    """Independent generator for a labelled component of the run."""
    spawn_key = (STREAMS[label],) + tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key))


def empirical_cdf(samples):
    """Sorted samples and their empirical CDF values ``i / n``."""
    x = np.sort(np.asarray(samples, dtype=float))
    return x, np.arange(1, x.size + 1) / x.size


@dataclass
class CampaignResult:
    """Tabular campaign output plus metadata.

    ``runtime_s`` is kept in memory only so exported files stay byte-identical
    across reruns with the same configuration and seed.
    """

    kind: str
    columns: tuple
    rows: list
    config: dict
    config_hash: str
    seed: int
    runtime_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def select(self, **filters):
        return [r for r in self.rows if all(r[k] == v for k, v in filters.items())]

    def samples(self, value=None, **filters):
        value = value or self.columns[-1]
        return np.array([r[value] for r in self.select(**filters)], dtype=float)

    def cdf(self, value=None, **filters):
        return empirical_cdf(self.samples(value, **filters))

    def quantile(self, q, value=None, **filters):
        """Empirical quantile (``q=0.5`` median, ``q=0.05`` the 95%-likely value)."""
        return float(np.quantile(self.samples(value, **filters), q))

    def mean_stderr(self, value=None, **filters):
        x = self.samples(value, **filters)
        if x.size < 2:
            return float(x.mean()), float("nan")
        return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "config": self.config,
            "columns": list(self.columns),
            "rows": [[r[c] for c in self.columns] for r in self.rows],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CampaignResult":
        doc = json.loads(text)
        cols = tuple(doc["columns"])
        rows = [dict(zip(cols, r)) for r in doc["rows"]]
        return cls(doc["kind"], cols, rows, doc["config"], doc["config_hash"], doc["seed"])


# --------------------------------------------------------------------- snapshot
def _deployment(config: ScenarioConfig, s: int):
    return generate_deployment(
        config.network, stream(config.seed, "deployment", s), stream(config.seed, "shadowing", s)
    )


def snapshot_covariances(config: ScenarioConfig, deployment):
    """Per-link covariances ``R`` (K, L, NQ, NQ) for the configured correlation model."""
    geom = config.array.geometry()
    if config.correlation == "local":
        az, el = nominal_angles(deployment)
        K, L = az.shape
        J = np.empty((K, L, geom.n_total, geom.n_total), dtype=complex)
        for k in range(K):
            for l in range(L):
                J[k, l] = local_scattering(geom, config.angular.spec(az[k, l], el[k, l]))
        return build_covariances(deployment.beta, J)
    return build_covariances(deployment.beta, correlation_matrix(geom, config.correlation))


def snapshot_plans(config: ScenarioConfig, strategy, R, deployment, pilots, sigma2, s):
    """Pilot-port plans (L, tau_p, N) of every AP and, for LND-PS, the search results."""
    strategy = Strategy(strategy)
    N, Q, tau_p = config.array.n_antennas, config.array.n_ports, config.network.tau_p
    rng = stream(config.seed, "plans", s)
    K, L = deployment.beta.shape
    eta_p = np.full(K, config.eta_p)
    plans, searches = [], {}
    for l in range(L):
        served = np.flatnonzero(deployment.serving[:, l])
        R_agg = R[served, l].sum(axis=0) if served.size else None
        plan = make_plan(strategy, N, Q, tau_p, rng=rng, nu=config.skip_nu, R_agg=R_agg)
        if strategy is Strategy.LNDPS and served.size:
            res = lnd_ps(plan, R[:, l], served, eta_p, pilots, sigma2, Q, config.algorithm)
            plan = res.plan
            searches[l] = res
        plans.append(plan)
    return np.stack(plans), searches


def _nmse_snapshot(args):
    config, strategies, s = args
    dep = _deployment(config, s)
    R = snapshot_covariances(config, dep)
    sigma2 = noise_variance(config.network)
    pilots = pilot_book(config.network.tau_p)[dep.pilot_index]
    eta_p = np.full(dep.n_users, config.eta_p)
    rows = []
    for strat in strategies:
        plans, _ = snapshot_plans(config, strat, R, dep, pilots, sigma2, s)
        for l in range(dep.n_aps):
            served = np.flatnonzero(dep.serving[:, l])
            if served.size == 0:
                continue
            nmse = ap_nmse(plans[l], R[:, l], served, eta_p, pilots, sigma2, config.array.n_ports)
            rows.append({"snapshot": s, "ap": l, "strategy": Strategy(strat).value, "nmse": float(nmse)})
    return rows


def _data_ports(config, ctx, s):
    L, N, Q = ctx.n_aps, ctx.n_antennas, ctx.n_ports
    if config.data_ports == "fixed":
        return np.zeros((L, N), dtype=int), None
    ports = stream(config.seed, "data_ports", s).integers(0, Q, size=(L, N))
    if config.data_ports == "random":
        return ports, None
    if config.effective_bound == "UatF":
        objective = UatfObjective(ctx)
    else:
        objective = MonteCarloObjective(
            ctx,
            config.scheme,
            config.effective_bound,
            config.n_realizations,
            stream(config.seed, "channels", s, 1),
            stream(config.seed, "noise", s, 1),
        )
    res = ao_sum_se(ports, objective, Q, config.algorithm)
    return res.plan, res


def build_context(config: ScenarioConfig, s: int, strategy=None):
    """Deployment, covariances, pilot plans and powers of snapshot ``s``."""
    dep = _deployment(config, s)
    R = snapshot_covariances(config, dep)
    sigma2 = noise_variance(config.network)
    pilots = pilot_book(config.network.tau_p)[dep.pilot_index]
    plans, _ = snapshot_plans(config, strategy or config.pilot_strategy, R, dep, pilots, sigma2, s)
    eta_d = allocate_power(
        config.power_policy, dep.beta, dep.serving, config.network.eta_max_mw, config.fpa_exponent
    )
    ctx = UplinkContext(
        R, dep.serving, pilots, plans, config.eta_p, eta_d, sigma2, config.array.n_ports, config.network.tau_c
    )
    return dep, ctx


def _se_snapshot(args):
    config, s = args
    _, ctx = build_context(config, s)
    ports, ao = _data_ports(config, ctx, s)
    bound = config.effective_bound
    if bound == "UatF":
        se = UatfObjective(ctx)(ports)
    else:
        h, hhat = ctx.draw(
            config.n_realizations, stream(config.seed, "channels", s), stream(config.seed, "noise", s)
        )
        if bound == "c":
            se = se_centralized_from_samples(ctx, ports, config.scheme, hhat).se
        else:
            se = se_distributed_from_samples(ctx, ports, config.scheme, h, hhat).se
    rows = [
        {
            "snapshot": s,
            "user": k,
            "scheme": config.scheme,
            "mode": config.mode,
            "bound": bound,
            "power_policy": config.power_policy,
            "se_bps_hz": float(se[k]),
        }
        for k in range(ctx.n_users)
    ]
    trace = None if ao is None else [float(v) for v in ao.trace]
    return rows, trace


def _map(fn, jobs, workers):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so aggregation is deterministic
        return list(pool.map(fn, jobs))


def run_nmse_campaign(config: ScenarioConfig, strategies=None) -> CampaignResult:
    """Per-AP NMSE of every snapshot for one or several pilot strategies.

    All strategies see the same deployments (common seeds).
    """
    config.validate()
    strategies = [Strategy(s).value for s in (strategies or [config.pilot_strategy])]
    if Strategy.SKIP.value in strategies and config.skip_nu is None:
        raise DomainError("SKIP strategy requires skip_nu")
    t0 = time.perf_counter()
    out = _map(_nmse_snapshot, [(config, strategies, s) for s in range(config.n_snapshots)], config.workers)
    rows = [r for chunk in out for r in chunk]
    return CampaignResult(
        "nmse", NMSE_COLUMNS, rows, config.to_dict(), config.hash(), config.seed, time.perf_counter() - t0
    )


def run_se_campaign(config: ScenarioConfig) -> CampaignResult:
    """Per-user SE of every snapshot under the configured receiver and bound."""
    config.validate()
    t0 = time.perf_counter()
    out = _map(_se_snapshot, [(config, s) for s in range(config.n_snapshots)], config.workers)
    rows = [r for chunk, _ in out for r in chunk]
    extra = {}
    if config.data_ports == "AO":
        extra["ao_traces"] = [t for _, t in out]
    return CampaignResult(
        "se", SE_COLUMNS, rows, config.to_dict(), config.hash(), config.seed, time.perf_counter() - t0, extra
    )


_AXES = {
    "N": ("array", "n_antennas"),
    "Q": ("array", "n_ports"),
    "eta_p": (None, "pilot_power_mw"),
    "delta": ("array", "port_spacing"),
    "geometry": ("array", "kind"),
}


def _with(config, axis, value):
    if axis not in _AXES:
        raise DomainError(f"unknown sweep axis {axis!r}; choose from {sorted(_AXES)}")
    cfg = copy.deepcopy(config)
    section, name = _AXES[axis]
    setattr(cfg if section is None else getattr(cfg, section), name, value)
    return cfg


def run_sweep(config: ScenarioConfig, axis: str, values, strategies=None) -> CampaignResult:
    """Mean NMSE with standard error for each value of one parameter.

    Every value reuses the same seed, hence the same deployments.
    """
    values = list(values)
    if not values:
        raise DomainError("sweep needs at least one value")
    t0 = time.perf_counter()
    rows = []
    for v in values:
        res = run_nmse_campaign(_with(config, axis, v), strategies)
        for strat in dict.fromkeys(r["strategy"] for r in res.rows):
            mean, se = res.mean_stderr("nmse", strategy=strat)
            n = len(res.select(strategy=strat))
            rows.append(
                {"axis": axis, "value": v, "strategy": strat, "mean_nmse": mean, "stderr": se, "n_samples": n}
            )
    return CampaignResult(
        "sweep", SWEEP_COLUMNS, rows, config.to_dict(), config.hash(), config.seed, time.perf_counter() - t0
    )


def optimize_ports(config: ScenarioConfig) -> CampaignResult:
    """Run LND-PS on the pilot plans and, when configured, AO on the data ports.

    Rows report the per-AP NMSE before and after the search; the optimised
    plans and data ports go to ``extra`` for audit.
    """
    config.validate()
    t0 = time.perf_counter()
    rows, plans_out = [], []
    Q, N, tau_p = config.array.n_ports, config.array.n_antennas, config.network.tau_p
    for s in range(config.n_snapshots):
        dep = _deployment(config, s)
        R = snapshot_covariances(config, dep)
        sigma2 = noise_variance(config.network)
        pilots = pilot_book(tau_p)[dep.pilot_index]
        plans, searches = snapshot_plans(config, Strategy.LNDPS, R, dep, pilots, sigma2, s)
        for l, res in searches.items():
            rows.append(
                {
                    "snapshot": s,
                    "ap": l,
                    "initial_nmse": float(res.trace[0]),
                    "final_nmse": float(res.objective),
                    "iterations": res.iterations,
                }
            )
        entry = {"snapshot": s, "pilot_plans": plans.tolist()}
        if config.data_ports == "AO":
            eta_d = allocate_power(
                config.power_policy, dep.beta, dep.serving, config.network.eta_max_mw, config.fpa_exponent
            )
            ctx = UplinkContext(R, dep.serving, pilots, plans, config.eta_p, eta_d, sigma2, Q, config.network.tau_c)
            ports, ao = _data_ports(config, ctx, s)
            entry["data_ports"] = ports.tolist()
            entry["sum_se_trace"] = [float(v) for v in ao.trace]
        plans_out.append(entry)
    cols = ("snapshot", "ap", "initial_nmse", "final_nmse", "iterations")
    return CampaignResult(
        "optimize", cols, rows, config.to_dict(), config.hash(), config.seed,
        time.perf_counter() - t0, {"plans": plans_out},
    )


def export(result: CampaignResult, fmt: str, path) -> None:
    """Write ``result`` as CSV (header plus one row per sample) or JSON."""
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(result.columns)
            for r in result.rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in result.columns])
    elif fmt == "json":
        doc = json.loads(result.to_json())
        if result.extra:
            doc["extra"] = result.extra
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
    else:
        raise DomainError(f"unknown export format {fmt!r}")
