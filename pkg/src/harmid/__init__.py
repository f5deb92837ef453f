"""Harmonic identity maps under the metric deformation g - df (x) df."""

__version__ = "0.1.0"
