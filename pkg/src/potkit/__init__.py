"""Discrete potential theory on recurrent weighted graphs."""

__version__ = "0.1.0"
