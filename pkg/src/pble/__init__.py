"""Simulation of backscatter tags that speak commodity BLE through a cooperating excitation source."""

from .packet import PhyMode

__version__ = "0.1.0"

__all__ = ["PhyMode", "__version__"]
