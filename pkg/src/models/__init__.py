"""Data types for coalbranch.

This package holds the two parameter spaces (branching and coalescent),
their validation reports, the trajectory container, library defaults and
the exception hierarchy.
"""
