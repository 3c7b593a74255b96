"""Day-ahead SCUC models with storage-based virtual transmission."""

__version__ = "0.1.0"
