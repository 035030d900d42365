"""Stabilization-free first-order virtual elements for plane elasticity."""

__version__ = "0.1.0"
