"""Retrieval-augmented agent trace simulation toolkit."""

__version__ = "0.1.0"
