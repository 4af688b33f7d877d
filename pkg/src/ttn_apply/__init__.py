"""Applying tree tensor network operators to tree tensor network states."""

__version__ = "0.1.0"
