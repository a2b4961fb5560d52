"""Rate-distortion tools for oriented geographic sites."""

__version__ = "0.1.0"
