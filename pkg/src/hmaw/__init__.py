"""Hierarchical multi-agent prompt optimization with pairwise evaluation."""

__version__ = "0.1.0"
