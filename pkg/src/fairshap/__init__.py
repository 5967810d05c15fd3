"""Fairness auditing with Shapley feature attributions and reweighing."""

__version__ = "0.1.0"
