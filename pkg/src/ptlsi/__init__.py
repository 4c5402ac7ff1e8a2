"""Selective inference after transfer-learning feature selection."""

__version__ = "0.1.0"
