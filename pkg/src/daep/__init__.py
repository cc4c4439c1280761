"""Exploration planning in dynamic environments: voxel mapping, obstacle
prediction, information gain, local/global planners, a deterministic
simulator and a benchmark harness."""

__version__ = "0.1.0"
