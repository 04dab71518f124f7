"""Leak detection and isolation in water distribution networks.

Steady-state hydraulic simulation, residual datasets, sensor placement and
online discriminative dictionary learning for locating the leaking node.
"""

__version__ = "0.1.0"

from .errors import ConfigError, ModelStateError, NumericalError, ParseError, ValidationError, WdnError
from .network import Network, parse_network

__all__ = [
    "ConfigError", "ModelStateError", "Network", "NumericalError", "ParseError",
    "ValidationError", "WdnError", "parse_network", "__version__",
]
