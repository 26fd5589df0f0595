"""Genetic search over discrete prompts for code intelligence models."""

__version__ = "0.1.0"
