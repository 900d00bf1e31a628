#!/usr/bin/env python3
"""
Parameter-space data types for multitype CSBPs and multitype Lambda-coalescents.

This module provides:

1. AtomicMeasure: finite weighted point-mass measures on the positive orthant
   or on the unit cube, with exact finite-sum integration
2. BranchingParams (B, c, mu) and CoalescentParams (rho, Q)
3. Validation of sign constraints and integrability functionals
4. Probe-based distances used as continuity diagnostics

All types are immutable after construction and safe to share between threads.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.models.errors import MeasureError, PreconditionError, StructuralError

logger = logging.getLogger(__name__)

# Absolute tolerance for atom coordinates (distinctness, zero point, cube membership)
ATOM_TOL = 1e-12

Point = Tuple[float, ...]
Probe = Callable[[np.ndarray], float]


class DomainTag(str, Enum):
    """Support domain of an atomic measure."""

    POSITIVE_ORTHANT = "positive_orthant"
    UNIT_CUBE = "unit_cube"


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """
    Finite atomic measure sum_k weight_k * delta_{point_k}.

    Args:
        atoms: Sequence of (point, weight) pairs
        domain_tag: POSITIVE_ORTHANT (R_+^d minus 0) or UNIT_CUBE ([0,1]^d minus 0)
        dim: Dimension d; inferred from the first atom when omitted

    Raises:
        MeasureError: If a weight is not positive, a point is zero, points repeat,
            or a unit-cube point leaves [0,1]^d
    """

    atoms: Tuple[Tuple[Point, float], ...]
    domain_tag: DomainTag = DomainTag.POSITIVE_ORTHANT
    dim: Optional[int] = None

    def __post_init__(self):
        atoms = tuple(
            (tuple(float(x) for x in point), float(weight)) for point, weight in self.atoms
        )
        dim = self.dim
        if dim is None:
            if not atoms:
                raise MeasureError("Cannot infer the dimension of an empty measure; pass dim")
            dim = len(atoms[0][0])
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "domain_tag", DomainTag(self.domain_tag))
        self._check()

    def _check(self) -> None:
        for point, weight in self.atoms:
            if len(point) != self.dim:
                raise MeasureError(f"Atom {point} has length {len(point)}, expected {self.dim}")
            if not (math.isfinite(weight) and weight > 0):
                raise MeasureError(f"Atom {point} has non-positive weight {weight}")
            if not all(math.isfinite(x) for x in point):
                raise MeasureError(f"Atom {point} has a non-finite coordinate")
            if all(abs(x) <= ATOM_TOL for x in point):
                raise MeasureError("Atom at the zero vector is not allowed")
            if min(point) < -ATOM_TOL:
                raise MeasureError(f"Atom {point} has a negative coordinate")
            if self.domain_tag is DomainTag.UNIT_CUBE and max(point) > 1.0 + ATOM_TOL:
                raise MeasureError(f"Atom {point} lies outside the unit cube")

        pts = self.points
        if len(pts) > 1:
            gaps = np.max(np.abs(pts[:, None, :] - pts[None, :, :]), axis=2)
            iu = np.triu_indices(len(pts), k=1)
            if np.any(gaps[iu] <= ATOM_TOL):
                raise MeasureError("Atom points must be pairwise distinct")

    @classmethod
    def empty(cls, dim: int, domain_tag: DomainTag = DomainTag.POSITIVE_ORTHANT) -> "AtomicMeasure":
        return cls((), domain_tag, dim)

    @property
    def points(self) -> np.ndarray:
        """Atom locations as a (k, d) array."""
        if not self.atoms:
            return np.zeros((0, self.dim))
        return np.array([p for p, _ in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    @property
    def total_mass(self) -> float:
        return math.fsum(w for _, w in self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def scaled(self, factor: float) -> "AtomicMeasure":
        """Multiply every weight by a positive factor."""
        if not factor > 0:
            raise MeasureError(f"Scale factor must be positive, got {factor}")
        return AtomicMeasure(
            tuple((p, w * factor) for p, w in self.atoms), self.domain_tag, self.dim
        )

    def reweighted(self, g: Callable[[np.ndarray], float]) -> "AtomicMeasure":
        """Density change w -> g(point) * w; atoms whose new weight is 0 are dropped."""
        atoms = []
        for p, w in self.atoms:
            new_weight = w * float(g(np.asarray(p)))
            if new_weight < 0:
                raise MeasureError(f"Reweighting produced a negative weight at {p}")
            if new_weight > 0:
                atoms.append((p, new_weight))
        return AtomicMeasure(tuple(atoms), self.domain_tag, self.dim)

    def mapped(self, fn: Callable[[np.ndarray], Sequence[float]], domain_tag: DomainTag) -> "AtomicMeasure":
        """
        Image measure under fn.

        Atoms whose images coincide (within ATOM_TOL, e.g. after rounding)
        become one atom carrying the summed weight.
        """
        merged: List[Tuple[np.ndarray, float]] = []
        for p, w in self.atoms:
            image = np.asarray(fn(np.asarray(p)), dtype=float)
            for k, (q, v) in enumerate(merged):
                if np.max(np.abs(image - q)) <= ATOM_TOL:
                    merged[k] = (q, v + w)
                    break
            else:
                merged.append((image, w))
        if len(merged) < len(self.atoms):
            logger.debug(f"Merged {len(self.atoms) - len(merged)} atoms that collide under the map")
        return AtomicMeasure(
            tuple((tuple(float(x) for x in q), v) for q, v in merged), domain_tag, self.dim
        )

    def to_list(self) -> List[Dict[str, Any]]:
        return [{"point": list(p), "weight": w} for p, w in self.atoms]

    def isclose(self, other: "AtomicMeasure", rtol: float = 1e-10, atol: float = 1e-12) -> bool:
        """Atom-by-atom comparison in stored order."""
        if self.dim != other.dim or len(self) != len(other) or self.domain_tag != other.domain_tag:
            return False
        if not self.atoms:
            return True
        return bool(
            np.allclose(self.points, other.points, rtol=rtol, atol=atol)
            and np.allclose(self.weights, other.weights, rtol=rtol, atol=atol)
        )


def integrate(m: AtomicMeasure, f: Callable[[np.ndarray], float]) -> float:
    """
    Integrate f against an atomic measure.

    Returns sum_k weight_k * f(point_k), summed with math.fsum.
    """
    return math.fsum(w * float(f(np.asarray(p))) for p, w in m.atoms)


def _as_square(name: str, matrix: Any, d: Optional[int] = None) -> np.ndarray:
    arr = np.array(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise StructuralError(f"{name} must be a square matrix, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise StructuralError(f"{name} has dimension {arr.shape[0]}, expected {d}")
    arr.setflags(write=False)
    return arr


def _check_measures(name: str, measures: Sequence[AtomicMeasure], d: int, tag: DomainTag) -> Tuple[AtomicMeasure, ...]:
    measures = tuple(measures)
    if len(measures) != d:
        raise StructuralError(f"{name} must hold {d} measures, got {len(measures)}")
    for i, m in enumerate(measures):
        if m.dim != d:
            raise StructuralError(f"{name}[{i}] has dimension {m.dim}, expected {d}")
        if m.domain_tag is not tag:
            raise MeasureError(f"{name}[{i}] must be supported on {tag.value}, got {m.domain_tag.value}")
    return measures


def _digest(payload: Dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class BranchingParams:
    """
    Triplet (B, c, mu) of a d-type continuous-state branching process.

    B carries the signed diagonal and the non-negative off-diagonal drift,
    c the diffusion coefficients and mu the jump measures on R_+^d.
    Invalid parameter values can be constructed; simulators refuse them.
    """

    B: np.ndarray
    c: np.ndarray
    mu: Tuple[AtomicMeasure, ...]

    def __post_init__(self):
        B = _as_square("B", self.B)
        d = B.shape[0]
        c = np.array(self.c, dtype=float).reshape(-1)
        if c.shape != (d,):
            raise StructuralError(f"c has length {c.size}, expected {d}")
        c.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "mu", _check_measures("mu", self.mu, d, DomainTag.POSITIVE_ORTHANT))

    @property
    def d(self) -> int:
        return self.B.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d": self.d,
            "B": self.B.tolist(),
            "c": self.c.tolist(),
            "mu": [m.to_list() for m in self.mu],
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON encoding."""
        return _digest(self.to_dict())

    def isclose(self, other: "BranchingParams", rtol: float = 1e-10, atol: float = 1e-12) -> bool:
        return (
            self.d == other.d
            and np.allclose(self.B, other.B, rtol=rtol, atol=atol)
            and np.allclose(self.c, other.c, rtol=rtol, atol=atol)
            and all(a.isclose(b, rtol, atol) for a, b in zip(self.mu, other.mu))
        )


@dataclass(frozen=True, eq=False)
class CoalescentParams:
    """
    Pair (rho, Q) of a d-type Lambda-coalescent.

    rho[i, i] is the pairwise merger rate of type-i blocks, rho[i, j] the rate
    at which a type-j block migrates to type i; Q[i] is the multiple-merger
    measure producing type-i blocks, supported on the unit cube.
    """

    rho: np.ndarray
    Q: Tuple[AtomicMeasure, ...]

    def __post_init__(self):
        rho = _as_square("rho", self.rho)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "Q", _check_measures("Q", self.Q, rho.shape[0], DomainTag.UNIT_CUBE))

    @property
    def d(self) -> int:
        return self.rho.shape[0]

    @property
    def prop(self) -> bool:
        """True when no Q_i charges points having a coordinate equal to 1."""
        return all(
            not len(q) or bool(np.all(q.points < 1.0 - ATOM_TOL)) for q in self.Q
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d": self.d,
            "rho": self.rho.tolist(),
            "Q": [q.to_list() for q in self.Q],
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON encoding."""
        return _digest(self.to_dict())

    def isclose(self, other: "CoalescentParams", rtol: float = 1e-10, atol: float = 1e-12) -> bool:
        return (
            self.d == other.d
            and np.allclose(self.rho, other.rho, rtol=rtol, atol=atol)
            and all(a.isclose(b, rtol, atol) for a, b in zip(self.Q, other.Q))
        )


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        # JSON has no infinity literal
        return {
            "name": self.name,
            "value": self.value if math.isfinite(self.value) else str(self.value),
            "threshold": self.threshold if math.isfinite(self.threshold) else str(self.threshold),
            "passed": self.passed,
        }


@dataclass
class ValidationReport:
    """
    Outcome of a parameter validation.

    ok is the conjunction of the checks; flags are informational only.
    """

    checks: List[Check] = field(default_factory=list)
    flags: Dict[str, bool] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(check.passed for check in self.checks)

    def add(self, name: str, value: float, threshold: float, passed: bool) -> None:
        self.checks.append(Check(name, float(value), float(threshold), bool(passed)))

    def failed(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]

    def get(self, name: str) -> Optional[Check]:
        for check in self.checks:
            if check.name == name:
                return check
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "checks": [check.to_dict() for check in self.checks],
            "flags": dict(self.flags),
        }


def _offdiag_min(matrix: np.ndarray) -> float:
    d = matrix.shape[0]
    if d == 1:
        return 0.0
    mask = ~np.eye(d, dtype=bool)
    return float(matrix[mask].min())


def xi(w: np.ndarray) -> np.ndarray:
    """Truncation (1 ^ |w_i|) * sign(w_i), coordinatewise."""
    w = np.asarray(w, dtype=float)
    return np.minimum(1.0, np.abs(w)) * np.sign(w)


def branching_integrability(p: BranchingParams, i: int) -> float:
    """Integral of xi_i(w)^2 + sum_{j != i} xi_j(w) against mu_i."""

    def functional(w: np.ndarray) -> float:
        t = xi(w)
        return t[i] ** 2 + (t.sum() - t[i])

    return integrate(p.mu[i], functional)


def coalescent_integrability(p: CoalescentParams, i: int) -> float:
    """Sum over j of the integral of u_j^(1 + delta_ij) against Q_i."""
    exponents = np.ones(p.d)
    exponents[i] = 2.0
    return integrate(p.Q[i], lambda u: float(np.sum(u ** exponents)))


def validate_branching(p: BranchingParams) -> ValidationReport:
    """
    Check sign constraints and the integrability functional of each mu_i.

    Args:
        p: Structurally well-formed branching parameters

    Returns:
        ValidationReport with checks finite_entries, offdiag_nonneg, c_nonneg
        and integrability_mu_<i> for every type i
    """
    report = ValidationReport()
    finite = bool(np.all(np.isfinite(p.B)) and np.all(np.isfinite(p.c)))
    report.add("finite_entries", 1.0 if finite else 0.0, 1.0, finite)

    offdiag = _offdiag_min(p.B)
    report.add("offdiag_nonneg", offdiag, 0.0, offdiag >= 0)
    cmin = float(p.c.min())
    report.add("c_nonneg", cmin, 0.0, cmin >= 0)

    for i in range(p.d):
        value = branching_integrability(p, i)
        report.add(f"integrability_mu_{i}", value, math.inf, math.isfinite(value))

    if not report.ok:
        logger.warning(f"Branching parameters failed checks: {report.failed()}")
    return report


def validate_coalescent(p: CoalescentParams) -> ValidationReport:
    """
    Check rho >= 0 and the integrability sum of each Q_i; report the prop flag.

    Atoms at the origin are rejected when the measure is built.
    """
    report = ValidationReport()
    finite = bool(np.all(np.isfinite(p.rho)))
    report.add("finite_entries", 1.0 if finite else 0.0, 1.0, finite)

    rmin = float(p.rho.min())
    report.add("rho_nonneg", rmin, 0.0, rmin >= 0)

    for i in range(p.d):
        value = coalescent_integrability(p, i)
        report.add(f"integrability_Q_{i}", value, math.inf, math.isfinite(value))

    report.flags["prop"] = p.prop

    if not report.ok:
        logger.warning(f"Coalescent parameters failed checks: {report.failed()}")
    return report


def default_probes(d: int) -> List[Probe]:
    """
    Fixed bounded-Lipschitz probe family: the constant 1, 1 ^ x_j for each
    coordinate, and exp(-|x|_1).
    """
    probes: List[Probe] = [lambda x: 1.0]
    for j in range(d):
        probes.append(lambda x, j=j: min(1.0, float(x[j])))
    probes.append(lambda x: math.exp(-float(np.sum(np.abs(x)))))
    return probes


def bl_distance(m1: AtomicMeasure, m2: AtomicMeasure, probes: Sequence[Probe]) -> float:
    """
    Max over probes of |int f dm1 - int f dm2|.

    A pseudo-metric that lower-bounds the bounded-Lipschitz distance.
    """
    if not probes:
        raise PreconditionError("bl_distance needs at least one probe")
    if m1.domain_tag is not m2.domain_tag:
        raise MeasureError(
            f"Cannot compare measures on {m1.domain_tag.value} and {m2.domain_tag.value}"
        )
    return max(abs(integrate(m1, f) - integrate(m2, f)) for f in probes)


def frobenius_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise StructuralError(f"Shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def _moment_weight(j: int, i: int, truncate: bool) -> Callable[[np.ndarray], float]:
    power = 2.0 if i == j else 1.0

    def g(x: np.ndarray) -> float:
        v = min(1.0, float(x[j])) if truncate else float(x[j])
        return v ** power

    return g


def coal_topology_distance(
    p: CoalescentParams, q: CoalescentParams, probes: Optional[Sequence[Probe]] = None
) -> float:
    """Frobenius distance of rho combined with probe distances of u_j^(1+delta_ij) Q_i."""
    if p.d != q.d:
        raise StructuralError(f"Dimension mismatch {p.d} vs {q.d}")
    probes = probes or default_probes(p.d)
    distance = frobenius_distance(p.rho, q.rho)
    for i in range(p.d):
        for j in range(p.d):
            g = _moment_weight(j, i, truncate=False)
            distance = max(distance, bl_distance(p.Q[i].reweighted(g), q.Q[i].reweighted(g), probes))
    return distance


def branch_topology_distance(
    p: BranchingParams, q: BranchingParams, probes: Optional[Sequence[Probe]] = None
) -> float:
    """Frobenius distances of B and c combined with probe distances of (1 ^ w_j)^(1+delta_ij) mu_i."""
    if p.d != q.d:
        raise StructuralError(f"Dimension mismatch {p.d} vs {q.d}")
    probes = probes or default_probes(p.d)
    distance = max(frobenius_distance(p.B, q.B), frobenius_distance(p.c, q.c))
    for i in range(p.d):
        for j in range(p.d):
            g = _moment_weight(j, i, truncate=True)
            distance = max(distance, bl_distance(p.mu[i].reweighted(g), q.mu[i].reweighted(g), probes))
    return distance


def measures_from_lists(
    raw: Iterable[Iterable[Tuple[Sequence[float], float]]], d: int, domain_tag: DomainTag
) -> Tuple[AtomicMeasure, ...]:
    """Build one measure per type from nested (point, weight) lists."""
    return tuple(AtomicMeasure(tuple(atoms), domain_tag, d) for atoms in raw)
