"""Exact combinatorics and discrete p-energy scaling for G-symmetric
polygon-based self-similar systems."""

__version__ = "0.1.0"
