"""Mobility-adjusted air-pollution exposure and disparity analytics engine."""

__version__ = "0.1.0"
