"""Numerical kernel for covariant balance laws of structured continua."""

__version__ = "0.1.0"
