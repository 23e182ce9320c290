"""Numerical laboratory for symplectic twist maps defined by generating functions."""

__version__ = "0.1.0"
