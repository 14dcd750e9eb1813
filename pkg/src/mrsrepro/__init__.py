"""Synthetic MR-spectroscopy quantification and reproducibility lab."""

__version__ = "0.1.0"
