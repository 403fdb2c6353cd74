"""Spectrum planning, user association and power allocation for multi-cell THz networks."""

__version__ = "0.1.0"
