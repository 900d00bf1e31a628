#!/usr/bin/env python3
"""
Multitype CSBP simulation.

The scheme per step of length h is an operator splitting:

1. drift and diffusion: x += h (B x - x * comp) + sqrt(2 c x h) * N(0, 1)
   with comp_k the integral of (1 ^ w_k) against mu_k
2. clamp negative coordinates to 0
3. jumps: for each colony i and atom (w, lam) of mu_i, a Poisson(x_i lam h)
   number of jumps of size w, rates frozen at the start of the sub-step

Also provides the paired process (X, Y) of two independent copies and its
frequency / total-mass decomposition R = X / (X + Y), Z = X + Y.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np

from src.core.ensemble import run_chunked
from src.models.config import CHUNK_SIZE, EXPLOSION_CAP
from src.models.errors import InvalidParamsError, PreconditionError, StructuralError
from src.models.params import BranchingParams, validate_branching
from src.models.trajectory import Trajectory
from src.utils.seeding import make_rng

logger = logging.getLogger(__name__)

CsbpState = np.ndarray


class PairState(NamedTuple):
    x: CsbpState
    y: CsbpState


@dataclass(frozen=True, eq=False)
class FreqMass:
    """Frequency r in [0,1]^d and total mass z; stopped marks the exit time."""

    r: np.ndarray
    z: np.ndarray
    stopped: bool = False

    def to_dict(self) -> Dict[str, object]:
        return {"r": self.r.tolist(), "z": self.z.tolist(), "stopped": self.stopped}


def mean_matrix(p: BranchingParams) -> np.ndarray:
    """
    First-moment matrix M with E[X(t)] = exp(t M) x0.

    M[k, i] = b_ki + int (w_k - (1 ^ w_i) 1{i = k}) mu_i(dw)
    """
    M = np.array(p.B, dtype=float)
    for i, m in enumerate(p.mu):
        if not len(m):
            continue
        pts, wts = m.points, m.weights
        M[:, i] += wts @ pts
        M[i, i] -= float(wts @ np.minimum(1.0, pts[:, i]))
    return M


def time_grid(T: float, dt: float) -> List[float]:
    if not (dt > 0 and math.isfinite(dt)):
        raise PreconditionError(f"Step size must be positive, got {dt}")
    if not (T >= 0 and math.isfinite(T)):
        raise PreconditionError(f"Horizon must be finite and non-negative, got {T}")
    steps = int(math.ceil(T / dt - 1e-9)) if T > 0 else 0
    return [min(k * dt, T) for k in range(steps + 1)]


class CsbpKernel:
    """
    Vectorised one-step map for rows of CSBP states.

    Rows are independent copies; a (m, d) array advances all of them at once.
    """

    def __init__(self, p: BranchingParams):
        report = validate_branching(p)
        if not report.ok:
            raise InvalidParamsError(f"Branching parameters are invalid: {report.failed()}", report)
        self.d = p.d
        self.B = np.array(p.B, dtype=float)
        self.c = np.array(p.c, dtype=float)
        self.comp = np.zeros(p.d)
        sources, sizes, rates = [], [], []
        for i, m in enumerate(p.mu):
            for point, weight in m.atoms:
                sources.append(i)
                sizes.append(point)
                rates.append(weight)
                self.comp[i] += weight * min(1.0, point[i])
        self.sources = np.array(sources, dtype=int)
        self.sizes = np.array(sizes, dtype=float).reshape(-1, p.d)
        self.rates = np.array(rates, dtype=float)

    def step(self, x: np.ndarray, h: float, rng: np.random.Generator) -> np.ndarray:
        """Advance every row of x by h; returns a new array."""
        drift = x @ self.B.T - x * self.comp
        noise = rng.standard_normal(x.shape)
        x = x + h * drift + np.sqrt(2.0 * self.c * x * h) * noise
        np.maximum(x, 0.0, out=x)
        if self.rates.size:
            intensity = x[:, self.sources] * self.rates * h
            counts = rng.poisson(intensity)
            x = x + counts @ self.sizes
        return x


def _check_state(name: str, x: Sequence[float], d: int) -> np.ndarray:
    x = np.array(x, dtype=float).reshape(-1)
    if x.size != d:
        raise StructuralError(f"{name} has length {x.size}, expected {d}")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise PreconditionError(f"{name} must be finite and non-negative, got {x.tolist()}")
    return x


def simulate_csbp(
    p: BranchingParams,
    x0: Sequence[float],
    T: float,
    dt: float,
    seed: int,
    explosion_cap: float = EXPLOSION_CAP,
) -> Trajectory:
    """
    Simulate one CSBP path on the grid 0, dt, 2dt, ..., T.

    The path stops early once all coordinates are 0 (absorbed) or one
    exceeds explosion_cap (exploded); the last state then holds to T.
    """
    grid = time_grid(T, dt)
    kernel = CsbpKernel(p)
    x = _check_state("x0", x0, p.d)
    rng = make_rng(seed)

    times, states = [0.0], [x.copy()]
    meta = {"params": p.digest(), "absorbed": False, "exploded": False}
    row = x[None, :]
    for k in range(1, len(grid)):
        if not np.any(row):
            meta["absorbed"] = True
            break
        row = kernel.step(row, grid[k] - grid[k - 1], rng)
        times.append(grid[k])
        states.append(row[0].copy())
        if np.any(row > explosion_cap):
            meta["exploded"] = True
            meta["explosion_time"] = grid[k]
            logger.debug(f"CSBP run seed={seed} exploded at t={grid[k]}")
            break
    return Trajectory(times=times, states=states, seed=seed, meta=meta, horizon=T)


def csbp_ensemble(
    p: BranchingParams,
    x0: Sequence[float],
    T: float,
    dt: float,
    reps: int,
    seed: int,
    explosion_cap: float = EXPLOSION_CAP,
    chunk_size: int = CHUNK_SIZE,
) -> np.ndarray:
    """
    Terminal values X(T) of reps independent paths, shape (reps, d).

    Rows that exceeded explosion_cap are reported as +inf.
    """
    grid = time_grid(T, dt)
    kernel = CsbpKernel(p)
    x = _check_state("x0", x0, p.d)

    def run(rows: int, rng: np.random.Generator) -> np.ndarray:
        state = np.tile(x, (rows, 1))
        active = np.ones(rows, dtype=bool)
        for k in range(1, len(grid)):
            if not active.any():
                break
            state[active] = kernel.step(state[active], grid[k] - grid[k - 1], rng)
            blown = active & np.any(state > explosion_cap, axis=1)
            if blown.any():
                state[blown] = np.inf
                active &= ~blown
        return state

    return run_chunked(run, reps, seed, chunk_size)


def _check_pair_args(
    d: int, r0: Sequence[float], z0: Sequence[float], eps: float, L: float
) -> Tuple[np.ndarray, np.ndarray]:
    r0 = np.array(r0, dtype=float).reshape(-1)
    z0 = np.array(z0, dtype=float).reshape(-1)
    if r0.size != d or z0.size != d:
        raise StructuralError(f"r0 and z0 must have length {d}")
    if np.any(r0 < 0) or np.any(r0 > 1):
        raise PreconditionError(f"r0 must lie in [0,1]^d, got {r0.tolist()}")
    if not np.all(np.isfinite(z0)) or np.any(z0 <= 0):
        raise PreconditionError(f"z0 must be strictly positive, got {z0.tolist()}")
    if not (0 < eps < z0.min() <= z0.max() < L):
        raise PreconditionError(
            f"Guard rails need 0 < eps < min z0 <= max z0 < L, got eps={eps}, L={L}, z0={z0.tolist()}"
        )
    return r0, z0


def frequency_of(x: np.ndarray, y: np.ndarray, last_r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """R = X / (X + Y) and Z = X + Y; coordinates with Z = 0 keep last_r."""
    z = x + y
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(z > 0, x / np.where(z > 0, z, 1.0), last_r)
    return np.clip(r, 0.0, 1.0), z


def simulate_pair_rz(
    p: BranchingParams,
    r0: Sequence[float],
    z0: Sequence[float],
    T: float,
    dt: float,
    seed: int,
    eps: float,
    L: float,
) -> Trajectory:
    """
    Simulate independent copies X, Y from x0 = r0 * z0, y0 = z0 - x0 and record (R, Z).

    Recording stops at the first grid time where some Z_i leaves (eps, L);
    that state carries stopped = True.
    """
    grid = time_grid(T, dt)
    kernel = CsbpKernel(p)
    r0, z0 = _check_pair_args(p.d, r0, z0, eps, L)
    rng = make_rng(seed)

    pair = PairState(r0 * z0, z0 - r0 * z0)
    xy = np.vstack([pair.x, pair.y])
    r = r0.copy()
    times, states = [0.0], [FreqMass(r.copy(), z0.copy(), False)]
    meta = {"params": p.digest(), "stopped": False, "stop_time": None}
    for k in range(1, len(grid)):
        xy = kernel.step(xy, grid[k] - grid[k - 1], rng)
        pair = PairState(xy[0], xy[1])
        r, z = frequency_of(pair.x, pair.y, r)
        stopped = bool(np.any(z <= eps) or np.any(z >= L))
        times.append(grid[k])
        states.append(FreqMass(r.copy(), z.copy(), stopped))
        if stopped:
            meta["stopped"] = True
            meta["stop_time"] = grid[k]
            logger.debug(f"Pair run seed={seed} left ({eps}, {L}) at t={grid[k]}")
            break
    return Trajectory(times=times, states=states, seed=seed, meta=meta, horizon=T)


def advance_pair(
    kernel: CsbpKernel,
    r: np.ndarray,
    z: np.ndarray,
    duration: float,
    dt: float,
    eps: float,
    L: float,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run the pair process from (r, z) for duration, row-wise.

    Args:
        r: (m, d) starting frequencies
        z: (d,) common starting total mass

    Returns:
        (R at duration ^ tau, stopped mask) with tau the first grid time some
        Z_i leaves (eps, L)
    """
    m = r.shape[0]
    x = r * z
    xy = np.concatenate([x, z - x], axis=0)
    current = r.copy()
    active = np.ones(m, dtype=bool)
    stopped = np.zeros(m, dtype=bool)
    grid = time_grid(duration, dt)
    for k in range(1, len(grid)):
        if not active.any():
            break
        rows = np.concatenate([active, active])
        xy[rows] = kernel.step(xy[rows], grid[k] - grid[k - 1], rng)
        new_r, new_z = frequency_of(xy[:m][active], xy[m:][active], current[active])
        current[active] = new_r
        left = np.any(new_z <= eps, axis=1) | np.any(new_z >= L, axis=1)
        if left.any():
            idx = np.flatnonzero(active)[left]
            stopped[idx] = True
            active[idx] = False
    return current, stopped
