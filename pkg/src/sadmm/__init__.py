"""Accelerated stochastic ADMM for linearly constrained finite sums."""

__version__ = "0.1.0"
