"""Numerical laboratory for the Katok map: a smooth area-preserving
perturbation of the cat map with a neutral fixed point at the origin."""

__version__ = "0.1.0"

from .params import KatokParams, ParameterError  # noqa: E402,F401
