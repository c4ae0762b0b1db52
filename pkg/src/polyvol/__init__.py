"""Boundary-measure estimation from distances sampled around a set."""

__version__ = "0.1.0"
