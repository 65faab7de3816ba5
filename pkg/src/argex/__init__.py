"""Event argument extraction with AMR-guided attention prefixes."""

__version__ = "0.1.0"
