"""Least-action classifier toolkit: cost-aware sparse ensembles driven by
a reinforcement-learned classifier-selection agent, plus the stacking and
GD-MC boosting baselines it is compared against."""

__version__ = "0.1.0"
