"""Scenario configuration loaded from a single JSON document."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .exceptions import ConfigError, DomainError
from .geometry import AngularSpec, ArrayGeometry, ArrayKind
from .network import NetworkConfig
from .ports import AlgorithmConfig, Strategy
from .performance import PowerPolicy

__all__ = ["ArrayConfig", "AngularConfig", "ScenarioConfig", "load_config"]

CORRELATION_MODELS = ("jakes", "local", "uncorrelated")
DATA_PORT_STRATEGIES = ("fixed", "random", "AO")
SCHEMES = ("MRC", "PMMSE", "LPMMSE")
MODES = ("centralized", "distributed")
BOUNDS = ("c", "d", "UatF")


@dataclass
class ArrayConfig:
    kind: str = "ULA"
    n_antennas: int = 4
    n_ports: int = 5
    port_spacing: float = 0.5
    fa_gap: float = 0.0

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(ArrayKind(self.kind), self.n_antennas, self.n_ports, self.port_spacing, self.fa_gap)


@dataclass
class AngularConfig:
    asd_azimuth_deg: float = 15.0
    asd_elevation_deg: float = 15.0

    def spec(self, azimuth=0.0, elevation=0.0) -> AngularSpec:
        return AngularSpec(
            azimuth, elevation, np.deg2rad(self.asd_azimuth_deg), np.deg2rad(self.asd_elevation_deg)
        )


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce a campaign.

    ``bound=None`` picks the natural bound of ``mode`` (``c`` or ``d``);
    AO data-port optimisation needs an explicit bound. ``pilot_power_mw=None``
    uses ``network.eta_max_mw``.
    """

    network: NetworkConfig = field(default_factory=NetworkConfig)
    array: ArrayConfig = field(default_factory=ArrayConfig)
    correlation: str = "jakes"
    angular: AngularConfig = field(default_factory=AngularConfig)
    pilot_strategy: str = "LNDPS"
    skip_nu: int | None = None
    data_ports: str = "fixed"
    scheme: str = "MRC"
    mode: str = "centralized"
    bound: str | None = None
    power_policy: str = "UFP"
    fpa_exponent: float = 0.0
    pilot_power_mw: float | None = None
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    seed: int = 0
    n_snapshots: int = 200
    n_realizations: int = 500
    workers: int = 1

    # ------------------------------------------------------------------ checks
    def problems(self):
        out = []
        try:
            geom = self.array.geometry()
            nq = geom.n_total
        except (DomainError, ValueError) as exc:
            out.append(("array", str(exc)))
            nq = None
        out += [(f"network.{f}", m) for f, m in self.network.problems(nq)]
        if self.correlation not in CORRELATION_MODELS:
            out.append(("correlation", f"must be one of {CORRELATION_MODELS}"))
        try:
            strat = Strategy(self.pilot_strategy)
        except ValueError:
            out.append(("pilot_strategy", f"must be one of {[s.value for s in Strategy]}"))
            strat = None
        if strat is Strategy.SKIP:
            if self.skip_nu is None:
                out.append(("skip_nu", "SKIP strategy requires nu"))
            elif not 0 <= self.skip_nu <= self.array.n_ports - 1:
                out.append(("skip_nu", "must lie in [0, Q-1]"))
        if self.data_ports not in DATA_PORT_STRATEGIES:
            out.append(("data_ports", f"must be one of {DATA_PORT_STRATEGIES}"))
        if self.scheme not in SCHEMES:
            out.append(("scheme", f"must be one of {SCHEMES}"))
        if self.mode not in MODES:
            out.append(("mode", f"must be one of {MODES}"))
        if self.bound is not None and self.bound not in BOUNDS:
            out.append(("bound", f"must be one of {BOUNDS}"))
        if self.data_ports == "AO" and self.bound is None:
            out.append(("bound", "AO data-port optimisation requires a bound"))
        b = self.effective_bound
        if b == "UatF" and self.scheme != "MRC":
            out.append(("scheme", "the UatF closed form requires MRC"))
        if b == "UatF" and self.mode != "centralized":
            out.append(("mode", "the UatF bound is a centralized bound"))
        if b == "d" and self.mode != "distributed":
            out.append(("mode", "bound 'd' requires distributed mode"))
        if b == "c" and self.mode != "centralized":
            out.append(("mode", "bound 'c' requires centralized mode"))
        try:
            PowerPolicy(self.power_policy)
        except ValueError:
            out.append(("power_policy", f"must be one of {[p.value for p in PowerPolicy]}"))
        if self.power_policy == "MMF":
            out.append(("power_policy", "MMF is not supported"))
        if self.pilot_power_mw is not None and not self.pilot_power_mw > 0:
            out.append(("pilot_power_mw", "must be positive"))
        if self.n_snapshots < 1:
            out.append(("n_snapshots", "must be >= 1"))
        if self.n_realizations < 1:
            out.append(("n_realizations", "must be >= 1"))
        if b == "d" and self.n_realizations < 2:
            out.append(("n_realizations", "distributed bound needs >= 2"))
        if self.workers < 1:
            out.append(("workers", "must be >= 1"))
        if self.seed < 0:
            out.append(("seed", "must be nonnegative"))
        return out

    def validate(self) -> "ScenarioConfig":
        probs = self.problems()
        if probs:
            raise ConfigError(probs)
        return self

    @property
    def effective_bound(self) -> str:
        if self.bound is not None:
            return self.bound
        return "d" if self.mode == "distributed" else "c"

    @property
    def eta_p(self) -> float:
        return self.network.eta_max_mw if self.pilot_power_mw is None else self.pilot_power_mw

    # ----------------------------------------------------------- serialisation
    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form (seed included)."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        nested = {"network": NetworkConfig, "array": ArrayConfig, "angular": AngularConfig}
        known = {f.name for f in fields(cls)}
        probs = [(k, "unknown field") for k in doc if k not in known]
        kwargs = {}
        for key, value in doc.items():
            if key not in known:
                continue
            if key in nested or key == "algorithm":
                sub = AlgorithmConfig if key == "algorithm" else nested[key]
                if not isinstance(value, dict):
                    probs.append((key, "must be an object"))
                    continue
                sub_known = {f.name for f in fields(sub)}
                probs += [(f"{key}.{k}", "unknown field") for k in value if k not in sub_known]
                try:
                    kwargs[key] = sub(**{k: v for k, v in value.items() if k in sub_known})
                except (TypeError, ValueError) as exc:
                    probs.append((key, str(exc)))
            else:
                kwargs[key] = value
        if probs:
            raise ConfigError(probs)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([("<document>", f"invalid JSON: {exc}")]) from exc
        if not isinstance(doc, dict):
            raise ConfigError([("<document>", "top level must be an object")])
        return cls.from_dict(doc)


def load_config(path) -> ScenarioConfig:
    """Read and validate a scenario file."""
    with open(path, encoding="utf-8") as fh:
        return ScenarioConfig.from_json(fh.read()).validate()
