"""Utility functions for coalbranch.

This package provides JSON handling for parameter files and reports, and
deterministic seed derivation for reproducible ensembles.
"""
