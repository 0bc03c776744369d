"""Certifying nonlocality and entanglement with connector tensor networks."""

__version__ = "0.1.0"
