"""Hemispheric-asymmetry features from FreeSurfer morphometry tables."""

__version__ = "0.1.0"
