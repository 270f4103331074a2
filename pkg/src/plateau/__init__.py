"""Numerics for lattice Green functions, torus plateaus and weakly self-avoiding walk."""

__version__ = "0.1.0"
