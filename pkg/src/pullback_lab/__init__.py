"""Numerical laboratory for exponential pullback attractors of a
nonautonomous damped wave equation."""

__version__ = "0.1.0"
