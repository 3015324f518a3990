"""Adversarial keystroke-dynamics synthesis and verification toolkit."""

__version__ = "0.1.0"
