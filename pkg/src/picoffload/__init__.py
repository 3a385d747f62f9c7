"""Particle-in-cell computational cycle with a modeled host/device offload
boundary for the particle mover."""

__version__ = "0.1.0"
