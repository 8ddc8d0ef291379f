"""Exact and asymptotic changepoint tests for binary and count time series."""
__version__ = "0.1.0"
