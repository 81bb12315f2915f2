"""Sizing and dispatch of rooftop PV-battery systems per customer group."""

__version__ = "0.1.0"
