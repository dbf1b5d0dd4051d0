"""Trainable controller that routes queries across a pool of agents of
differing strength, critiques their drafts and decides when to stop."""

__version__ = "0.1.0"
