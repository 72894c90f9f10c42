"""Termination and public-computability analysis for logically constrained
simply-typed term rewriting systems."""

__version__ = "0.1.0"
