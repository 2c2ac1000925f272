"""Damped waves with time-periodic dissipation: monodromy, Floquet data and decay rates."""

__version__ = "0.1.0"
