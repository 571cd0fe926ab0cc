"""Numerical laboratory for singular (fast-diffusion) chemotaxis and its Hölder-regularity machinery."""

__version__ = "0.1.0"
