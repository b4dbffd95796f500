"""Single-image rain removal: guided-filter detail layers cleaned by a small CNN."""
__version__ = "0.1.0"
