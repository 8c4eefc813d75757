"""Gauge-transform reduction of 1D Schroedinger operators to Fourier multipliers, with spectral oracles."""

__version__ = "0.1.0"
