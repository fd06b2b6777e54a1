"""Superconducting CPW resonator design, notch-trace fitting and loss analysis."""

__version__ = "0.1.0"
