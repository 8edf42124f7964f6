"""Streaming multivariate forecasting under delayed feedback and concept drift."""

__version__ = "0.1.0"
