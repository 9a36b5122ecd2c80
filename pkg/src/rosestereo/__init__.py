"""Stereo localization of flower centers: synthetic scenes, detection,
template matching and evaluation."""

__version__ = "0.1.0"
