"""Fingervein recognition pipelines and a score-distribution bias audit."""

__version__ = "0.1.0"
