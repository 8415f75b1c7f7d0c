"""Hierarchical partition-based CVRP solving with trainable partition policies."""

__version__ = "0.1.0"
