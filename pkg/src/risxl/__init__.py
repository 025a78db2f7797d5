"""Simulation and optimization toolkit for a RIS-assisted XL-MIMO downlink."""

__version__ = "0.1.0"
