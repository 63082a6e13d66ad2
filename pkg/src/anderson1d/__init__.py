"""Numerical laboratory for the one-dimensional Anderson model."""

__version__ = "0.1.0"
