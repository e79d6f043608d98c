"""Numerical laboratory for Schrödinger operators with point interactions."""

__version__ = "0.1.0"
