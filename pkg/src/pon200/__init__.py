"""Waveform-level simulator and planner for 200 Gb/s WDM/TDM passive optical networks."""

__version__ = "0.1.0"
