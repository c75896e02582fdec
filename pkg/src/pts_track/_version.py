"""Base pts-track version."""

__version__ = "0.1.0dev0"
