"""Semantic placement evaluation, data-pipeline logic and embodied placement simulation."""

__version__ = "0.1.0"
