"""Bloch bundles, Chern invariants and Wannier functions of periodic magnetic Schroedinger operators."""

__version__ = "0.1.0"

__all__ = ["__version__"]
