"""Simulation and statistics for the Wigner minor process."""

__version__ = "0.1.0"
