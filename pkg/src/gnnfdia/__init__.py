"""Stealth false-data-injection attacks on AC grids and a Chebyshev graph
convolutional detector for them."""
__version__ = "0.1.0"
