"""Equilibrium leads and pickoff policies for the runner/pitcher game."""

__version__ = "0.1.0"
