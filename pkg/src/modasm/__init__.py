"""Enumeration, optimization and flight of modular quadrotor assemblies."""

__version__ = "0.1.0"
