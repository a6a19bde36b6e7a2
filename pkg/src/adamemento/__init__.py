"""Exploration and exploitation in sparse-reward gridworlds: coarse-fine
curiosity, a memory of the best trajectories, and a reflection gate."""

__version__ = "0.1.0"
