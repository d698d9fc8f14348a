"""Spectral laboratory for higher-order dispersive equations on the torus."""

__version__ = "0.1.0"
