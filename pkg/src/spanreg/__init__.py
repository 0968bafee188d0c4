"""Span-based named entity recognition with explicit regularity modeling."""

__version__ = "0.1.0"
