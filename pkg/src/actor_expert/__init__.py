"""Continuous-action Q-learning with a conditional cross-entropy actor."""

__version__ = "0.1.0"
