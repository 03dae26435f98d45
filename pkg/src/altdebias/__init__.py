"""Alternate-network bias discovery and mitigation on colored digit
benchmarks."""

__version__ = "0.1.0"
