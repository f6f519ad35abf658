"""Modular electric ground-drive analysis for agricultural machines."""

__version__ = '0.1.0'
