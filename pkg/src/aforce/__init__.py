"""Cartesian adaptive force-impedance control: simulation and benchmarking."""

__version__ = "0.1.0"
