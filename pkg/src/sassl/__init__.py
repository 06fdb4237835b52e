"""Desk-scale self-supervised learning with style-transfer augmentation."""

__version__ = "0.1.0"
