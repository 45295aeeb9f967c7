"""Uplink cell-free massive MIMO simulator with fluid-antenna access points."""

from .exceptions import ConfigError, DomainError, NumericalError, UnsupportedConfigurationError
from .geometry import AngularSpec, ArrayGeometry, ArrayKind, correlation_matrix
from .network import Deployment, NetworkConfig, generate_deployment
from .performance import PowerPolicy, UplinkContext, allocate_power
from .ports import AlgorithmConfig, Strategy

__version__ = "0.1.0"

__all__ = [
    "AlgorithmConfig",
    "AngularSpec",
    "ArrayGeometry",
    "ArrayKind",
    "ConfigError",
    "Deployment",
    "DomainError",
    "NetworkConfig",
    "NumericalError",
    "PowerPolicy",
    "Strategy",
    "UnsupportedConfigurationError",
    "UplinkContext",
    "allocate_power",
    "correlation_matrix",
    "generate_deployment",
]
