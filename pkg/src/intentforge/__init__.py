"""Purchase-intent prediction from clickstream sessions."""

__version__ = "0.1.0"
