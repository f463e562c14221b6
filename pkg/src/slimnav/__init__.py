"""Adaptive-width depth perception and joint navigation/adaptation control on grid worlds."""

__version__ = "0.1.0"
