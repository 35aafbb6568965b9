"""Reflected forward-backward stochastic systems with subdifferential drivers."""

__version__ = "0.1.0"
