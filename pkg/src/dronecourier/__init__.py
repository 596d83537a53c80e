"""Deterministic drone last-mile delivery simulator and coordination service."""

__version__ = "0.1.0"
