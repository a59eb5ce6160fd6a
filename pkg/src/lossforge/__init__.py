"""Structural credit-portfolio loss engine with jumps and branch correlations."""
__version__ = "0.1.0"
