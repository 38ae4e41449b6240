"""Hybrid task allocation between a conventional recommender and an LLM ranker."""

__version__ = "0.1.0"
