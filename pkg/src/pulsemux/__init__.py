"""Frequency-domain multiplexing of detector pulses: simulation and recovery."""
__version__ = "0.1.0"
