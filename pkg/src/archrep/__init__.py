"""Simulation, estimation and verification tools for ARCH(p) residual empirical processes."""

__version__ = "0.1.0"
