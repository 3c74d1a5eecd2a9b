"""Dirichlet heat kernel bounds, exact kernels and Monte Carlo oracles for convex domains."""

__version__ = "0.1.0"
