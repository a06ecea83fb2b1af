"""Hybrid finite-element / neural-network sea-ice dynamics at desk scale."""

__version__ = "0.1.0"
