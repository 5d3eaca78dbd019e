"""Simulation and boundary control of a hyperbolic traffic flow model on [0, 1]."""

__version__ = "0.1.0"
