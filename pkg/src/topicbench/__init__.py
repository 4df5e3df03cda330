"""Workbench for additively regularized topic models: EM training with a
pluggable regularizer stack, intrinsic quality metrics, an iterative
accumulate-and-sift trainer with a topic bank, baseline model series, and a
review service for human-in-the-loop labeling."""

__version__ = "0.1.0"
