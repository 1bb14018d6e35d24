"""Desk-scale weakly supervised video anomaly detection pipeline with rule mining."""

__version__ = "0.1.0"
