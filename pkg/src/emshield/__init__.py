"""Simulation and detection of electromagnetic signal injection on actuator wires."""

from ._kernels import active_backend, set_backend
from .errors import EmShieldError

__version__ = "0.1.0"

__all__ = ["EmShieldError", "active_backend", "set_backend", "__version__"]
