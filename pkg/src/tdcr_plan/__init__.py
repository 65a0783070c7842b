"""Quasi-static path planning for tendon-driven continuum robots in elastic contact."""

__version__ = "0.1.0"
