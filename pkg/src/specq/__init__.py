"""Numerical toolkit for special Q-valued functions."""

__version__ = "0.1.0"
