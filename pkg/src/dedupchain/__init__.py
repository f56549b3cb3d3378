"""Simulated contract-based deduplication with fair, uniform storage fees."""

__version__ = "0.1.0"
