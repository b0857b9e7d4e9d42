"""Dissipative dynamics of a qubit coupled to a weakly nonlinear oscillator."""

__version__ = "0.1.0"
