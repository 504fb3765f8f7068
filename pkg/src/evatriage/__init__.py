"""Extreme-value analysis of core arrivals and triage sorting simulation."""

__version__ = "0.1.0"
