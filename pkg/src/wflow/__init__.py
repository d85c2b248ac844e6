"""Wasserstein gradient and steepest-descent flows of Riesz-kernel energies."""

__version__ = "0.1.0"
