"""Causal verification of machine unlearning for black-box tabular models."""

__version__ = "0.1.0"
