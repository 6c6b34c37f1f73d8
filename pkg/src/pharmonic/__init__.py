"""Planar p-harmonic functions near critical points and their mean value property."""

__version__ = "0.1.0"
