#!/usr/bin/env python3
"""
Change of variables T_z and the homeomorphism H_z between branching
triplets (B, c, mu) and coalescent pairs (rho, Q) at a fixed mass level z.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.models.errors import DomainError, InvalidParamsError, StructuralError
from src.models.params import (
    AtomicMeasure,
    BranchingParams,
    CoalescentParams,
    DomainTag,
    validate_branching,
    validate_coalescent,
)

logger = logging.getLogger(__name__)


def _parse_csv(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()], dtype=float)
    except ValueError as e:
        raise DomainError(f"Expected comma-separated floats, got '{text}'") from e


@dataclass(frozen=True, eq=False)
class MassLevel:
    """Fixed level z in (0, inf)^d."""

    z: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(-1)
        if z.size == 0 or not np.all(np.isfinite(z)) or not np.all(z > 0):
            raise DomainError(f"Mass level must be strictly positive and finite, got {z.tolist()}")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def d(self) -> int:
        return self.z.size

    @classmethod
    def from_csv(cls, text: str) -> "MassLevel":
        return cls(_parse_csv(text))


@dataclass(frozen=True, eq=False)
class DiagonalAnchor:
    """Diagonal a fixed for the inverse map (b_ii = a_i)."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        if not np.all(np.isfinite(a)):
            raise DomainError(f"Diagonal anchor must be finite, got {a.tolist()}")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def d(self) -> int:
        return self.a.size

    @classmethod
    def zeros(cls, d: int) -> "DiagonalAnchor":
        return cls(np.zeros(d))

    @classmethod
    def from_csv(cls, text: str) -> "DiagonalAnchor":
        return cls(_parse_csv(text))


def _check_dim(name: str, d: int, expected: int) -> None:
    if d != expected:
        raise StructuralError(f"{name} has dimension {d}, expected {expected}")


def t_z(w: Sequence[float], z: MassLevel) -> np.ndarray:
    """(w_i / (w_i + z_i))_i, mapping R_+^d into [0, 1)^d."""
    w = np.asarray(w, dtype=float)
    _check_dim("w", w.size, z.d)
    if np.any(w < 0):
        raise DomainError(f"T_z is defined on the positive orthant, got {w.tolist()}")
    return w / (w + z.z)


def t_z_inverse(u: Sequence[float], z: MassLevel) -> np.ndarray:
    """(z_i u_i / (1 - u_i))_i; inverse of t_z."""
    u = np.asarray(u, dtype=float)
    _check_dim("u", u.size, z.d)
    if np.any(u >= 1.0) or np.any(u < 0):
        raise DomainError(f"Inverse of T_z needs every u_i in [0, 1), got {u.tolist()}")
    return z.z * u / (1.0 - u)


def pushforward(m: AtomicMeasure, z: MassLevel) -> AtomicMeasure:
    """Image of a measure on R_+^d under T_z; weights unchanged."""
    _check_dim("measure", m.dim, z.d)
    return m.mapped(lambda w: t_z(w, z), DomainTag.UNIT_CUBE)


def pullback(m: AtomicMeasure, z: MassLevel) -> AtomicMeasure:
    """Image of a unit-cube measure under the inverse of T_z; weights unchanged."""
    _check_dim("measure", m.dim, z.d)
    return m.mapped(lambda u: t_z_inverse(u, z), DomainTag.POSITIVE_ORTHANT)


def h_z(p: BranchingParams, z: MassLevel) -> CoalescentParams:
    """
    Map branching parameters to coalescent parameters at level z.

    rho_ii = 2 c_i / z_i, rho_ij = b_ji z_i / z_j (j != i) and
    Q_i = z_i * T_z mu_i.

    Raises:
        InvalidParamsError: If p fails validate_branching
    """
    _check_dim("z", z.d, p.d)
    report = validate_branching(p)
    if not report.ok:
        raise InvalidParamsError(f"Branching parameters are invalid: {report.failed()}", report)

    zz = z.z
    # rho[i, j] = B[j, i] * z_i / z_j off the diagonal
    rho = p.B.T * np.outer(zz, 1.0 / zz)
    np.fill_diagonal(rho, 2.0 * p.c / zz)
    Q = tuple(pushforward(p.mu[i], z).scaled(zz[i]) for i in range(p.d))
    return CoalescentParams(rho=rho, Q=Q)


def h_z_inverse(
    p: CoalescentParams, z: MassLevel, a: Optional[DiagonalAnchor] = None
) -> BranchingParams:
    """
    Map coalescent parameters back to branching parameters at level z.

    c_i = z_i rho_ii / 2, b_ii = a_i, b_ij = rho_ji z_i / z_j (j != i) and
    mu_i = (1 / z_i) * (pullback of Q_i).

    Raises:
        DomainError: If some Q_i charges a point with a coordinate equal to 1
        InvalidParamsError: If p fails validate_coalescent
    """
    _check_dim("z", z.d, p.d)
    a = a if a is not None else DiagonalAnchor.zeros(p.d)
    _check_dim("a", a.d, p.d)
    if not p.prop:
        raise DomainError("Q charges points with a coordinate equal to 1; the inverse of T_z diverges there")
    report = validate_coalescent(p)
    if not report.ok:
        raise InvalidParamsError(f"Coalescent parameters are invalid: {report.failed()}", report)

    zz = z.z
    B = p.rho.T * np.outer(zz, 1.0 / zz)
    np.fill_diagonal(B, a.a)
    c = zz * np.diag(p.rho) / 2.0
    mu = tuple(pullback(p.Q[i], z).scaled(1.0 / zz[i]) for i in range(p.d))
    return BranchingParams(B=B, c=c, mu=mu)
