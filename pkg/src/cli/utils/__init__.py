"""
CLI utilities for coalbranch.
"""
