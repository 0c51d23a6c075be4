"""Numerical laboratory for stochastic scalar conservation laws with rough transport noise on the torus."""

__version__ = "0.1.0"
