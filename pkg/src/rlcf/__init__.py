"""Coarse-tuning a toy code-generation policy with coordinated feedback from a
static checker and a learned comparator, plus supervised and RL baselines and
a metric@k evaluation harness."""

__version__ = "0.1.0"
