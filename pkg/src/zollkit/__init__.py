"""Numerical laboratory for Zoll projective structures on the 2-sphere."""

__version__ = "0.1.0"
