"""Shapelet-guided condensation of time-series classification datasets."""

__version__ = "0.1.0"
