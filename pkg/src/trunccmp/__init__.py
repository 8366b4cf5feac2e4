"""Truncated mean-parameterised Conway-Maxwell-Poisson count regression."""

__version__ = "0.1.0"
