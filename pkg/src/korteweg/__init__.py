"""Spectral toolkit for the capillary compressible fluid system near a zero-sound-speed equilibrium."""

__version__ = "0.1.0"
