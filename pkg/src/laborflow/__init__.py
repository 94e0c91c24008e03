"""Occupational mobility analysis on labor-flow networks."""

__version__ = "0.1.0"
