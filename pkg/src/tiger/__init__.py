"""Temporal-graph agent embeddings for cooperative multi-agent Q-learning."""

__version__ = "0.1.0"
