#!/usr/bin/env python3
"""
Multitype Lambda-coalescent rates and simulators.

This module provides:

1. lambda_rate: the merger rate of one specific selection of k blocks out of b
2. The classical (one-type) reduction from a Lambda measure to (rho, Q)
3. BlockCountingChain: the N_0^d-valued block-counting CTMC, either in
   coalescent parameters or in branching parameters at a mass level z
4. TypedPartition and PartitionChain: the partition-valued process on [M]
5. restrict and partition_distance on typed partitions

Type labels are 0-based indices; ground-set elements are 1..M.
"""

import itertools
import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb

from src.core.ensemble import map_reps
from src.core.transform import MassLevel, pushforward
from src.models.config import TRANSITION_CACHE_CAP
from src.models.errors import (
    DomainError,
    InvalidParamsError,
    MeasureError,
    PreconditionError,
    RateError,
    StructuralError,
)
from src.models.params import (
    ATOM_TOL,
    AtomicMeasure,
    BranchingParams,
    CoalescentParams,
    DomainTag,
    validate_branching,
    validate_coalescent,
)
from src.models.trajectory import Trajectory
from src.utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

BlockCounts = Tuple[int, ...]
Params = Union[BranchingParams, CoalescentParams]


class TransitionKind(str, Enum):
    PAIRWISE = "pairwise"
    MIGRATION = "migration"
    MULTI_MERGER = "multi_merger"


@dataclass(frozen=True)
class Transition:
    """One outgoing transition: target state, positive rate, and the merger it performs."""

    target: Any
    rate: float
    kind: TransitionKind
    result_type: int
    merged: BlockCounts = ()


def _kind(k: Sequence[int]) -> TransitionKind:
    size = sum(k)
    if size == 1:
        return TransitionKind.MIGRATION
    if size == 2:
        return TransitionKind.PAIRWISE
    return TransitionKind.MULTI_MERGER


def _unit(d: int, i: int) -> BlockCounts:
    return tuple(1 if j == i else 0 for j in range(d))


def _multi_comb(n: Sequence[int], k: Sequence[int]) -> int:
    return math.prod(int(comb(nj, kj, exact=True)) for nj, kj in zip(n, k))


class RateTable:
    """
    Rate coefficients of the block-counting chain for each resulting type i.

    pair[i]       rate of merging one specific pair of type-i blocks into type i
    mig[i, j]     rate at which one specific type-j block becomes type i
    points[i], weights[i]
                  atoms of the multiple-merger measure producing type i

    Built either from coalescent parameters (rho, Q), or from branching
    parameters at level z through the duality rates: pair = 2 c_i / z_i,
    mig[i, j] = b_ji z_i / z_j and atoms z_i * T_z mu_i.
    """

    def __init__(self, params: Params, z: Optional[MassLevel] = None):
        if isinstance(params, BranchingParams):
            if z is None:
                raise PreconditionError("Branching parameters need a mass level z")
            if z.d != params.d:
                raise StructuralError(f"z has dimension {z.d}, expected {params.d}")
            report = validate_branching(params)
            if not report.ok:
                raise InvalidParamsError(f"Branching parameters are invalid: {report.failed()}", report)
            zz = z.z
            self.pair = 2.0 * params.c / zz
            self.mig = params.B.T * np.outer(zz, 1.0 / zz)
            measures = [pushforward(params.mu[i], z) for i in range(params.d)]
            self.points = [m.points for m in measures]
            self.weights = [zz[i] * m.weights for i, m in enumerate(measures)]
        elif isinstance(params, CoalescentParams):
            if z is not None:
                raise PreconditionError("A mass level z applies only to branching parameters")
            report = validate_coalescent(params)
            if not report.ok:
                raise InvalidParamsError(f"Coalescent parameters are invalid: {report.failed()}", report)
            self.pair = np.diag(params.rho).copy()
            self.mig = np.array(params.rho, dtype=float)
            self.points = [q.points for q in params.Q]
            self.weights = [q.weights for q in params.Q]
        else:
            raise TypeError(f"Unsupported parameter type {type(params).__name__}")
        self.d = params.d
        np.fill_diagonal(self.mig, 0.0)

    def atom_sum(self, i: int, b: Sequence[int], k: Sequence[int]) -> float:
        """Sum over atoms of weight * prod_j u_j^k_j (1 - u_j)^(b_j - k_j)."""
        pts = self.points[i]
        if not len(pts):
            return 0.0
        b = np.asarray(b, dtype=float)
        k = np.asarray(k, dtype=float)
        terms = np.prod(pts ** k * (1.0 - pts) ** (b - k), axis=1)
        return float(np.dot(self.weights[i], terms))

    def rate(self, i: int, b: Sequence[int], k: Sequence[int]) -> float:
        """Rate of one specific selection of k blocks (out of b) merging into type i."""
        value = self.atom_sum(i, b, k)
        size = sum(k)
        if size == 2 and k[i] == 2:
            value += self.pair[i]
        elif size == 1 and k[i] == 0:
            j = next(idx for idx, kj in enumerate(k) if kj == 1)
            value += self.mig[i, j]
        return value


def _check_merger(b: Sequence[int], k: Sequence[int], i: int, d: int) -> None:
    if len(b) != d or len(k) != d:
        raise StructuralError(f"b and k must have length {d}")
    if not 0 <= i < d:
        raise RateError(f"Type index {i} outside 0..{d - 1}")
    if any(kj < 0 or kj > bj for kj, bj in zip(k, b)):
        raise RateError(f"k={tuple(k)} is not in the box [0, b] for b={tuple(b)}")
    if sum(k) == 0 or tuple(k) == _unit(d, i):
        raise RateError(f"k={tuple(k)} is 0 or e_{i}; no transition")


def lambda_rate(b: Sequence[int], k: Sequence[int], i: int, p: CoalescentParams) -> float:
    """
    Rate at which a specific selection of k blocks out of b merges into one type-i block.

    rho_ii 1{k = 2e_i} + sum_{j != i} rho_ij 1{k = e_j} + int u^k (1 - u)^(b - k) Q_i(du)

    Raises:
        RateError: If k is outside [0, b] or k is 0 or e_i
    """
    _check_merger(b, k, i, p.d)
    return RateTable(p).rate(i, b, k)


@dataclass(frozen=True, eq=False)
class LambdaMeasure:
    """
    Finite atomic Lambda measure on [0, 1] of a classical Lambda-coalescent.

    Unlike AtomicMeasure it may charge the point 0 (the Kingman component).
    """

    atoms: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        atoms = tuple((float(x), float(w)) for x, w in self.atoms)
        for x, w in atoms:
            if not 0.0 <= x <= 1.0:
                raise MeasureError(f"Lambda atom {x} lies outside [0, 1]")
            if not (math.isfinite(w) and w > 0):
                raise MeasureError(f"Lambda atom {x} has non-positive weight {w}")
        xs = sorted(x for x, _ in atoms)
        if any(b - a <= ATOM_TOL for a, b in zip(xs, xs[1:])):
            raise MeasureError("Lambda atoms must be pairwise distinct")
        object.__setattr__(self, "atoms", atoms)

    @property
    def total_mass(self) -> float:
        return math.fsum(w for _, w in self.atoms)


def classical_lambda_to_Q(Lambda: LambdaMeasure) -> Tuple[float, AtomicMeasure]:
    """
    Split a classical Lambda measure into (rho, Q).

    rho = Lambda({0}); an atom at x > 0 with weight w becomes an atom of Q
    at x with weight w / x^2.
    """
    rho = math.fsum(w for x, w in Lambda.atoms if x <= ATOM_TOL)
    atoms = tuple(((x,), w / (x * x)) for x, w in Lambda.atoms if x > ATOM_TOL)
    return rho, AtomicMeasure(atoms, DomainTag.UNIT_CUBE, 1)


def coalescent_from_lambda(Lambda: LambdaMeasure) -> CoalescentParams:
    rho, Q = classical_lambda_to_Q(Lambda)
    return CoalescentParams(rho=[[rho]], Q=(Q,))


def pitman_rate(Lambda: LambdaMeasure, b: int, k: int) -> float:
    """Classical rate: integral of x^(k-2) (1 - x)^(b-k) against Lambda, 2 <= k <= b."""
    if not 2 <= k <= b:
        raise RateError(f"Classical rate needs 2 <= k <= b, got k={k}, b={b}")
    total = []
    for x, w in Lambda.atoms:
        if x <= ATOM_TOL:
            if k == 2:
                total.append(w)
        else:
            total.append(w * x ** (k - 2) * (1.0 - x) ** (b - k))
    return math.fsum(total)


def _box(n: Sequence[int]):
    return itertools.product(*(range(nj + 1) for nj in n))


class TransitionCache:
    """
    Bounded per-state transition cache, least recently used evicted first.

    Shared by the worker threads of one ensemble.
    """

    def __init__(self, cap: int = TRANSITION_CACHE_CAP):
        if cap < 1:
            raise PreconditionError(f"Transition cache cap must be positive, got {cap}")
        self.cap = int(cap)
        self._entries: "OrderedDict[Hashable, List[Transition]]" = OrderedDict()
        self._lock = threading.Lock()

    def get(self, state: Hashable) -> Optional[List[Transition]]:
        with self._lock:
            out = self._entries.get(state)
            if out is not None:
                self._entries.move_to_end(state)
            return out

    def put(self, state: Hashable, transitions: List[Transition]) -> None:
        with self._lock:
            self._entries[state] = transitions
            self._entries.move_to_end(state)
            while len(self._entries) > self.cap:
                self._entries.popitem(last=False)

    def __len__(self) -> int:
        return len(self._entries)


class BlockCountingChain:
    """
    Block-counting CTMC on N_0^d.

    With coalescent parameters the rates are C(n, k) * lambda^i_{n,k}; with
    branching parameters and a level z they are the duality rates q_nm.
    Transitions are cached per state, at most cache_cap states at a time.
    """

    def __init__(self, params: Params, z: Optional[MassLevel] = None, cache_cap: int = TRANSITION_CACHE_CAP):
        self.params = params
        self.z = z
        self.table = RateTable(params, z)
        self.digest = params.digest()
        self.d = params.d
        self._cache = TransitionCache(cache_cap)

    def transitions(self, n: Sequence[int]) -> List[Transition]:
        n = tuple(int(x) for x in n)
        if len(n) != self.d:
            raise StructuralError(f"Block counts {n} do not have length {self.d}")
        if any(x < 0 for x in n):
            raise PreconditionError(f"Block counts must be non-negative, got {n}")
        cached = self._cache.get(n)
        if cached is not None:
            return cached

        out: List[Transition] = []
        if sum(n) > 0:
            for k in _box(n):
                size = sum(k)
                if size == 0:
                    continue
                multiplicity = _multi_comb(n, k)
                for i in range(self.d):
                    if size == 1 and k[i] == 1:
                        continue
                    rate = multiplicity * self.table.rate(i, n, k)
                    if rate <= 0:
                        continue
                    target = tuple(n[j] - k[j] + (1 if j == i else 0) for j in range(self.d))
                    out.append(Transition(target, rate, _kind(k), i, k))
        self._cache.put(n, out)
        return out

    def total_rate(self, n: Sequence[int]) -> float:
        return math.fsum(t.rate for t in self.transitions(n))


def enumerate_block_transitions(
    n: Sequence[int], p: Params, z: Optional[MassLevel] = None
) -> List[Transition]:
    """
    All positive-rate transitions out of block counts n.

    Args:
        n: Block counts with |n| >= 1
        p: CoalescentParams (native rates) or BranchingParams (needs z)
        z: Mass level for branching parameters
    """
    return BlockCountingChain(p, z).transitions(n)


@dataclass(frozen=True)
class TypedPartition:
    """
    d-type partition of [M] = {1, ..., M}.

    blocks holds (elements, type) pairs ordered by least element; only
    nonempty blocks are stored.
    """

    M: int
    blocks: Tuple[Tuple[Tuple[int, ...], int], ...]

    def __post_init__(self):
        blocks = tuple(
            sorted(
                ((tuple(sorted(int(e) for e in elements)), int(t)) for elements, t in self.blocks),
                key=lambda blk: blk[0][0] if blk[0] else 0,
            )
        )
        seen: List[int] = []
        for elements, t in blocks:
            if not elements:
                raise StructuralError("Partition blocks must be nonempty")
            if t < 0:
                raise StructuralError(f"Block type {t} is negative")
            seen.extend(elements)
        if sorted(seen) != list(range(1, self.M + 1)):
            raise StructuralError(f"Blocks do not form a disjoint cover of 1..{self.M}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def singletons(cls, types: Sequence[int]) -> "TypedPartition":
        """Element m (1-based) becomes a singleton block of type types[m-1]."""
        return cls(len(types), tuple(((m + 1,), int(t)) for m, t in enumerate(types)))

    @classmethod
    def from_counts(cls, n0: Sequence[int]) -> "TypedPartition":
        """Singletons of [|n0|]: the first n0[0] elements of type 0, then n0[1] of type 1, ..."""
        types = [t for t, count in enumerate(n0) for _ in range(int(count))]
        if not types:
            raise PreconditionError("Initial partition needs at least one block")
        return cls.singletons(types)

    def block_counts(self, d: int) -> BlockCounts:
        counts = [0] * d
        for _, t in self.blocks:
            if t >= d:
                raise StructuralError(f"Block type {t} outside 0..{d - 1}")
            counts[t] += 1
        return tuple(counts)

    def __len__(self) -> int:
        return len(self.blocks)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "M": self.M,
            "blocks": [{"elements": list(e), "type": t} for e, t in self.blocks],
        }


def restrict(pi: TypedPartition, m: int) -> TypedPartition:
    """Intersect every block with [m], drop empty blocks, keep types."""
    if not 1 <= m <= pi.M:
        raise DomainError(f"Restriction level {m} outside 1..{pi.M}")
    blocks = []
    for elements, t in pi.blocks:
        kept = tuple(e for e in elements if e <= m)
        if kept:
            blocks.append((kept, t))
    return TypedPartition(m, tuple(blocks))


def partition_distance(pi: TypedPartition, other: TypedPartition) -> float:
    """
    1 / max{m : restrictions to [m] agree}.

    0 when the partitions agree on all of [M]; 2 when they already
    disagree on [1].
    """
    if pi.M != other.M:
        raise StructuralError(f"Ground sets differ: {pi.M} vs {other.M}")
    if pi == other:
        return 0.0
    agree = 0
    for m in range(1, pi.M + 1):
        if restrict(pi, m) != restrict(other, m):
            break
        agree = m
    return 2.0 if agree == 0 else 1.0 / agree


class PartitionChain:
    """
    Partition-valued CTMC on typed partitions of [M].

    Every selection of k_j blocks of each type j (k not 0 or e_i) merges into
    one block of type i at the per-selection rate lambda^i_{b,k}.
    """

    def __init__(self, params: Params, z: Optional[MassLevel] = None, cache_cap: int = TRANSITION_CACHE_CAP):
        self.params = params
        self.table = RateTable(params, z)
        self.digest = params.digest()
        self.d = params.d
        self._cache = TransitionCache(cache_cap)

    def transitions(self, pi: TypedPartition) -> List[Transition]:
        cached = self._cache.get(pi)
        if cached is not None:
            return cached

        b = pi.block_counts(self.d)
        by_type: List[List[int]] = [[] for _ in range(self.d)]
        for idx, (_, t) in enumerate(pi.blocks):
            by_type[t].append(idx)

        out: List[Transition] = []
        for k in _box(b):
            size = sum(k)
            if size == 0:
                continue
            for i in range(self.d):
                if size == 1 and k[i] == 1:
                    continue
                rate = self.table.rate(i, b, k)
                if rate <= 0:
                    continue
                kind = _kind(k)
                choices = [itertools.combinations(by_type[j], k[j]) for j in range(self.d)]
                for selection in itertools.product(*choices):
                    chosen = set(itertools.chain.from_iterable(selection))
                    merged = tuple(e for idx in chosen for e in pi.blocks[idx][0])
                    rest = tuple(blk for idx, blk in enumerate(pi.blocks) if idx not in chosen)
                    target = TypedPartition(pi.M, rest + ((merged, i),))
                    out.append(Transition(target, rate, kind, i, k))
        self._cache.put(pi, out)
        return out

    def total_rate(self, pi: TypedPartition) -> float:
        return math.fsum(t.rate for t in self.transitions(pi))


def enumerate_partition_transitions(
    pi: TypedPartition, p: Params, z: Optional[MassLevel] = None
) -> List[Transition]:
    return PartitionChain(p, z).transitions(pi)


def gillespie(
    initial: Hashable,
    transitions: Callable[[Any], List[Transition]],
    horizon: float,
    rng: np.random.Generator,
) -> Tuple[List[float], List[Any], bool]:
    """
    Direct-method CTMC simulation up to horizon.

    Returns (times, states, absorbed) where absorbed is True when a state
    without outgoing transitions was reached before the horizon.
    """
    t = 0.0
    state = initial
    times = [0.0]
    states = [state]
    while True:
        out = transitions(state)
        if not out:
            return times, states, True
        rates = np.array([tr.rate for tr in out])
        total = rates.sum()
        t += rng.exponential(1.0 / total)
        if t > horizon:
            return times, states, False
        idx = int(np.searchsorted(np.cumsum(rates), rng.uniform() * total, side="right"))
        state = out[min(idx, len(out) - 1)].target
        times.append(t)
        states.append(state)


def _check_horizon(T: float) -> None:
    if not (T >= 0 and math.isfinite(T)):
        raise PreconditionError(f"Horizon must be finite and non-negative, got {T}")


def simulate_block_counting(
    n0: Sequence[int],
    p: Params,
    z: Optional[MassLevel],
    T: float,
    seed: int,
    chain: Optional[BlockCountingChain] = None,
) -> Trajectory:
    """
    Simulate the block-counting chain from n0 up to time T.

    Pass a prebuilt chain to share its transition cache across runs.
    """
    _check_horizon(T)
    chain = chain or BlockCountingChain(p, z)
    n0 = tuple(int(x) for x in n0)
    times, states, absorbed = gillespie(n0, chain.transitions, T, make_rng(seed))
    logger.debug(f"Block-counting run seed={seed}: {len(times) - 1} jumps, absorbed={absorbed}")
    return Trajectory(
        times=times,
        states=states,
        seed=seed,
        meta={"params": chain.digest, "absorbed": absorbed},
        horizon=T,
    )


def simulate_partition(
    pi0: TypedPartition,
    p: Params,
    T: float,
    seed: int,
    z: Optional[MassLevel] = None,
    chain: Optional[PartitionChain] = None,
) -> Trajectory:
    """Simulate the typed-partition chain from pi0 up to time T."""
    _check_horizon(T)
    chain = chain or PartitionChain(p, z)
    pi0.block_counts(p.d)
    times, states, absorbed = gillespie(pi0, chain.transitions, T, make_rng(seed))
    logger.debug(f"Partition run seed={seed}: {len(times) - 1} jumps, absorbed={absorbed}")
    return Trajectory(
        times=times,
        states=states,
        seed=seed,
        meta={"params": chain.digest, "absorbed": absorbed},
        horizon=T,
    )


def block_counting_ensemble(
    n0: Sequence[int],
    p: Params,
    z: Optional[MassLevel],
    t: float,
    reps: int,
    seed: int,
) -> np.ndarray:
    """
    Terminal block counts N(t) of reps independent runs, shape (reps, d).

    Rep k is seeded with derive_seed(seed, k).
    """
    chain = BlockCountingChain(p, z)

    def run(k: int) -> BlockCounts:
        return simulate_block_counting(n0, p, z, t, derive_seed(seed, k), chain).final_state

    return np.array(map_reps(run, reps), dtype=int).reshape(reps, p.d)


def partition_ensemble(
    pi0: TypedPartition,
    p: Params,
    t: float,
    reps: int,
    seed: int,
    z: Optional[MassLevel] = None,
) -> List[TypedPartition]:
    """Terminal partitions of reps independent runs; rep k uses derive_seed(seed, k)."""
    chain = PartitionChain(p, z)

    def run(k: int) -> TypedPartition:
        return simulate_partition(pi0, p, t, derive_seed(seed, k), z, chain).final_state

    return map_reps(run, reps)
