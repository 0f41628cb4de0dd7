"""Liouville-space simulation of multilevel quantum heat engines."""

__version__ = "0.1.0"
