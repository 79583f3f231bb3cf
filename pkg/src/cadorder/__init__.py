"""Interpretable variable-ordering heuristics for CAD-style polynomial problems."""

__version__ = "0.1.0"
