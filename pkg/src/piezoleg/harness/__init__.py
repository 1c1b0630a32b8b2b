"""Batch experiment pipeline: calibration, identification, trials, sweeps."""
