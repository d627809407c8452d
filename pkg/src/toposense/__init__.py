"""Finite-element barotropic ocean model with topography sensitivity analysis."""

__version__ = "0.1.0"
