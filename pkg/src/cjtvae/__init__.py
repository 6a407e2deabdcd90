"""Controllable junction-tree VAE for small molecules."""

__version__ = "0.1.0"
