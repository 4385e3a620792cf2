"""Numerical laboratory for mollified Riemannian metrics and their curvature."""

__version__ = "0.1.0"
