"""Numerical laboratory for homoclinic tangencies and periodic-orbit growth."""
__version__ = "0.1.0"
