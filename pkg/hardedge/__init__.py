"""Spectral kernels, samplers and verification for the Bessel process conditioned below 1."""

__version__ = "0.1.0"
