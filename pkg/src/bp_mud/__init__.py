"""Belief-propagation multi-user detection for Gaussian-symbol CDMA."""

__version__ = "0.1.0"
