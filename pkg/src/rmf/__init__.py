"""Desk-scale numerical laboratory for Riesz-type mean-field particle systems."""

__version__ = "0.1.0"
