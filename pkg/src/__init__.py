"""Birkhoff Lab - deviation asymptotics of Birkhoff sums for expanding interval maps."""

__version__ = "0.1.0"
__all__ = ["__version__"]
