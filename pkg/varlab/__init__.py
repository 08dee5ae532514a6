"""Desk-scale numerical laboratory for the 4/3-variation of the derivative of
self-intersection local time."""

__version__ = "1.0.0"
