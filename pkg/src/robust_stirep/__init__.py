"""Robust area/energy-optimal pulses for resonant three-level population transfer."""

__version__ = "0.1.0"
