"""Restricted Indian buffet process models."""

__version__ = "0.1.0"
