"""Stochastic multi-group epidemic model with lockdown fatigue, vaccination opinions and optimal lockdown control."""

__version__ = "0.1.0"
