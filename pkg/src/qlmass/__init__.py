"""Constructive pipeline for the positivity of quasi-local mass."""

__version__ = "0.1.0"
