"""Landmark regression with convolutional networks, augmentation, evaluation
and two-view reconstruction."""

__version__ = "0.1.0"
