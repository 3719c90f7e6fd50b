"""Inertial manifolds of neutral delay equations with small delays."""

__version__ = "0.1.0"
