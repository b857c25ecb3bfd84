"""Accelerated tabular reinforcement learning for temporal-logic tasks."""

__version__ = "0.1.0"
