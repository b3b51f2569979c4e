"""Sparse functional boxplots for multivariate functional data."""

__version__ = "0.1.0"
