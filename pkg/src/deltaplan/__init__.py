"""Continuous-POMDP planning with a cheap observation model and offline
discrepancy bounds on the value gap versus the expensive model."""

__version__ = "0.1.0"
