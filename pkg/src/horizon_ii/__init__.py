"""Numerical certificates for immersion-and-invariance stabilisation via horizontal contraction."""

__version__ = "0.1.0"
