"""Finite models of universal étale lifts: finite T0 spaces, étale groupoids, lift networks."""

__version__ = "0.1.0"
