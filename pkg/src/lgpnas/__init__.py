"""Surrogate-assisted evolution of convolutional architectures encoded as
register-transfer programs."""

__version__ = "0.1.0"
