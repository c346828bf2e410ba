"""Off-the-grid estimation and goodness-of-fit tests for continuous dictionaries."""

__version__ = "0.1.0"
