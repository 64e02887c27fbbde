"""Side-channel analysis on power traces encoded as images."""

__version__ = "0.1.0"
