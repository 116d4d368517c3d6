"""Per-user collaborative-filtering algorithm selection toolkit."""

from .cf import BASE_LEARNERS, ZEROES_LABEL

__all__ = ["BASE_LEARNERS", "ZEROES_LABEL"]
__version__ = "0.1.0"
