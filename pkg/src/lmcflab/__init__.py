"""Numerical laboratory for Lagrangian mean curvature flow of surfaces in C^2."""

__version__ = "0.1.0"
