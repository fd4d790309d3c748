"""Behavioral simulator and toolkit for SRAM-undervolting true random number generation."""

__version__ = "0.1.0"
