"""Attention-state classification from multichannel EEG band power."""

__version__ = "0.1.0"
