"""Low-rank approximation of text contours with robust subspace fitting."""

__version__ = "0.1.0"
