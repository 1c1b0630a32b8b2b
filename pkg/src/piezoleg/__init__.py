"""Simulated proprioceptive estimation and control for a piezo-actuated legged microrobot."""

__version__ = "0.1.0"
