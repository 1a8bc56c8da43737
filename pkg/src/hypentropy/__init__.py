"""Numerical companion for volume entropy, barycenters and spherical volume on hyperbolic manifolds."""

__version__ = "0.1.0"
