"""Semisupervised adversarial active learning for node classification."""

__version__ = "0.1.0"
