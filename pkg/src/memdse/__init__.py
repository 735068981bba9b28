"""Evolutionary design-space exploration of the memory subsystem."""

__version__ = "0.1.0"
