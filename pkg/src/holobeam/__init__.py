"""Holographic integrated data-and-energy transfer toolkit."""

__version__ = "0.1.0"
