#!/usr/bin/env python3
"""
Exception hierarchy for coalbranch.

Every error raised by the library derives from CoalbranchError so the CLI
can map failures to exit codes in one place.
"""

from typing import Optional


class CoalbranchError(Exception):
    """Base class for all library errors."""


class StructuralError(CoalbranchError):
    """Dimension mismatch between the parts of a parameter set."""


class MeasureError(CoalbranchError):
    """An atomic measure violates one of its invariants."""


class InvalidParamsError(CoalbranchError):
    """Parameters failed validation; the failing report is attached."""

    def __init__(self, message: str, report: Optional["ValidationReport"] = None):  # noqa: F821
        super().__init__(message)
        self.report = report


class DomainError(CoalbranchError, ValueError):
    """Argument outside the domain of a map (e.g. u_i = 1 for the inverse of T_z)."""


class RateError(CoalbranchError, ValueError):
    """Illegal merger vector k in a rate query."""


class PreconditionError(CoalbranchError, ValueError):
    """A simulator precondition was violated."""


class StateSpaceOverflowError(CoalbranchError):
    """The exact backward evaluator reached its state cap."""

    def __init__(self, cap: int):
        super().__init__(
            f"Reachable state space exceeds {cap} states; use the Monte Carlo backward estimate instead"
        )
        self.cap = cap


class ParamsFormatError(CoalbranchError):
    """Malformed parameter JSON. The message names the offending field."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
