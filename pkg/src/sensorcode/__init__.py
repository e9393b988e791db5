"""Low-complexity distributed source coding for large sensor networks."""

__version__ = "0.1.0"
