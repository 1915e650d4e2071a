"""Numerical laboratory for Agmon-distance decay bounds of ground states."""

__version__ = "0.1.0"
