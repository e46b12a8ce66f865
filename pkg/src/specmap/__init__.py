"""Spectrum occupancy analytics, radio environment maps and white-space allocation."""

__version__ = "0.1.0"
