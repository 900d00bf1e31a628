#!/usr/bin/env python3
"""
Sequentially sampled frequency process.

This module provides:

1. FreqParams: the coefficients of the limit SDE at a fixed mass level z
2. simulate_limit_sde: Euler scheme with frozen-rate Poisson jumps for R^(z,r)
3. sequential_sampling: the culling scheme that restarts the total mass at z
   after every exponential(n) time and evolves the pair (X, Y) for 1/n
4. generator_on_monomial and raw_generator_on_monomial: two independent
   evaluations of the generator on r^n

Family-1 jumps from source type j fire at rate z_j R_j and move
r -> r + (1 - r) * u; family-2 jumps fire at rate z_j (1 - R_j) and move
r -> r - r * u. Every jump moves all coordinates at once.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.special import comb

from src.core.branching import CsbpKernel, advance_pair, time_grid
from src.core.ensemble import run_chunked
from src.core.transform import MassLevel, pushforward
from src.models.config import CHUNK_SIZE
from src.models.errors import InvalidParamsError, PreconditionError, StructuralError
from src.models.params import BranchingParams, validate_branching
from src.models.trajectory import Trajectory
from src.utils.seeding import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FreqParams:
    """
    Coefficients of the frequency SDE at level z.

    migration[i, j]  b_ij z_j / z_i (j != i)
    drift_coeffs     beta_ij = migration[i, j] + z_j int u_i T_z mu_j(du), zero diagonal
    diff_coeffs      gamma_i = 2 c_i / z_i
    jump_atoms[j]    (points, weights) of T_z mu_j
    jump_moment[j, i] int u_i T_z mu_j(du)
    params           digest of the branching parameters the coefficients came from
    """

    z: MassLevel
    migration: np.ndarray
    drift_coeffs: np.ndarray
    diff_coeffs: np.ndarray
    jump_atoms: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    jump_moment: np.ndarray
    params: str = ""

    @property
    def d(self) -> int:
        return self.z.d


def build_freq_params(p: BranchingParams, z: MassLevel) -> FreqParams:
    """Compute all SDE coefficients by finite sums over the pushforward atoms."""
    if z.d != p.d:
        raise StructuralError(f"z has dimension {z.d}, expected {p.d}")
    report = validate_branching(p)
    if not report.ok:
        raise InvalidParamsError(f"Branching parameters are invalid: {report.failed()}", report)

    zz = z.z
    d = p.d
    migration = p.B * np.outer(1.0 / zz, zz)
    np.fill_diagonal(migration, 0.0)

    atoms = []
    moment = np.zeros((d, d))
    for j in range(d):
        pushed = pushforward(p.mu[j], z)
        pts, wts = pushed.points, pushed.weights
        atoms.append((pts, wts))
        if len(pts):
            moment[j] = wts @ pts

    drift = migration + zz[None, :] * moment.T
    np.fill_diagonal(drift, 0.0)
    return FreqParams(
        z=z,
        migration=migration,
        drift_coeffs=drift,
        diff_coeffs=2.0 * p.c / zz,
        jump_atoms=tuple(atoms),
        jump_moment=moment,
        params=p.digest(),
    )


class FrequencyKernel:
    """Vectorised one-step map of the limit SDE for rows of frequencies."""

    def __init__(self, fp: FreqParams):
        self.fp = fp
        self.z = fp.z.z
        self.beta = fp.drift_coeffs
        self.beta_rowsum = fp.drift_coeffs.sum(axis=1)
        self.gamma = fp.diff_coeffs
        self.moment = fp.jump_moment
        sources, sizes, rates = [], [], []
        for j, (pts, wts) in enumerate(fp.jump_atoms):
            for point, weight in zip(pts, wts):
                sources.append(j)
                sizes.append(point)
                rates.append(weight)
        self.sources = np.array(sources, dtype=int)
        self.log_keep = np.log1p(-np.array(sizes, dtype=float).reshape(-1, fp.d))
        self.rates = np.array(rates, dtype=float)

    def compensator(self, r: np.ndarray) -> np.ndarray:
        up = (r * self.z) @ self.moment
        down = ((1.0 - r) * self.z) @ self.moment
        return -(1.0 - r) * up + r * down

    def step(self, r: np.ndarray, h: float, rng: np.random.Generator) -> np.ndarray:
        drift = r @ self.beta.T - r * self.beta_rowsum + self.compensator(r)
        noise = rng.standard_normal(r.shape)
        r = r + h * drift + np.sqrt(self.gamma * r * (1.0 - r) * h) * noise
        np.clip(r, 0.0, 1.0, out=r)
        if self.rates.size:
            scale = self.z[self.sources] * self.rates * h
            up = rng.poisson(r[:, self.sources] * scale)
            down = rng.poisson((1.0 - r[:, self.sources]) * scale)
            r = 1.0 - (1.0 - r) * np.exp(up @ self.log_keep)
            r = r * np.exp(down @ self.log_keep)
            np.clip(r, 0.0, 1.0, out=r)
        return r


def apply_jump(r: Sequence[float], u: Sequence[float], family: int) -> np.ndarray:
    """Single jump of size u: family 1 gives r + (1 - r) * u, family 2 gives r - r * u."""
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    if family == 1:
        return r + (1.0 - r) * u
    if family == 2:
        return r - r * u
    raise ValueError(f"Jump family must be 1 or 2, got {family}")


def _check_r0(r0: Sequence[float], d: int) -> np.ndarray:
    r0 = np.array(r0, dtype=float).reshape(-1)
    if r0.size != d:
        raise StructuralError(f"r0 has length {r0.size}, expected {d}")
    if np.any(~np.isfinite(r0)) or np.any(r0 < 0) or np.any(r0 > 1):
        raise PreconditionError(f"r0 must lie in [0,1]^d, got {r0.tolist()}")
    return r0


def simulate_limit_sde(
    fp: FreqParams, r0: Sequence[float], T: float, dt: float, seed: int
) -> Trajectory:
    """Simulate R^(z,r) on the grid 0, dt, ..., T."""
    grid = time_grid(T, dt)
    r = _check_r0(r0, fp.d)[None, :]
    kernel = FrequencyKernel(fp)
    rng = make_rng(seed)
    times, states = [0.0], [r[0].copy()]
    for k in range(1, len(grid)):
        r = kernel.step(r, grid[k] - grid[k - 1], rng)
        times.append(grid[k])
        states.append(r[0].copy())
    return Trajectory(
        times=times, states=states, seed=seed, meta={"params": fp.params, "z": fp.z.z.tolist()}, horizon=T
    )


def limit_sde_ensemble(
    fp: FreqParams,
    r0: Sequence[float],
    T: float,
    dt: float,
    reps: int,
    seed: int,
    chunk_size: int = CHUNK_SIZE,
) -> np.ndarray:
    """Terminal values R(T) of reps independent paths, shape (reps, d)."""
    grid = time_grid(T, dt)
    r0 = _check_r0(r0, fp.d)
    kernel = FrequencyKernel(fp)

    def run(rows: int, rng: np.random.Generator) -> np.ndarray:
        r = np.tile(r0, (rows, 1))
        for k in range(1, len(grid)):
            r = kernel.step(r, grid[k] - grid[k - 1], rng)
        return r

    return run_chunked(run, reps, seed, chunk_size)


@dataclass(frozen=True)
class SeqSampleConfig:
    """
    Culling configuration.

    n: sampling intensity; eps, L: guard rails on Z; inner_dt: step of the
    inner pair simulation, capped at 1 / (10 n).
    """

    n: int
    eps: float
    L: float
    inner_dt: float = 1e-3

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise PreconditionError(f"Sampling intensity must be a positive integer, got {self.n}")
        if not self.inner_dt > 0:
            raise PreconditionError(f"inner_dt must be positive, got {self.inner_dt}")

    @property
    def effective_inner_dt(self) -> float:
        return min(self.inner_dt, 1.0 / (10.0 * self.n))

    def check(self, z: MassLevel) -> None:
        if not (0 < self.eps < z.z.min() <= z.z.max() < self.L):
            raise PreconditionError(
                f"Guard rails need 0 < eps < min z <= max z < L, got eps={self.eps}, L={self.L}, z={z.z.tolist()}"
            )


def _culling_setup(p: BranchingParams, z: MassLevel, r0, cfg: SeqSampleConfig):
    if z.d != p.d:
        raise StructuralError(f"z has dimension {z.d}, expected {p.d}")
    cfg.check(z)
    return CsbpKernel(p), _check_r0(r0, p.d)


def sequential_sampling(
    p: BranchingParams,
    z: MassLevel,
    r0: Sequence[float],
    cfg: SeqSampleConfig,
    T: float,
    seed: int,
) -> Trajectory:
    """
    One path of the culled process on [0, T].

    Skeleton steps happen at the arrival times of a rate-n Poisson process;
    each runs the pair process from (current r, z) for 1/n or until Z leaves
    (eps, L), and the trajectory jumps to the resulting frequency.
    """
    kernel, r = _culling_setup(p, z, r0, cfg)
    if not (T >= 0 and math.isfinite(T)):
        raise PreconditionError(f"Horizon must be finite and non-negative, got {T}")
    rng = make_rng(seed)
    times, states = [0.0], [r.copy()]
    stopped_steps = 0
    t = rng.exponential(1.0 / cfg.n)
    while t <= T:
        new_r, stopped = advance_pair(
            kernel, r[None, :], z.z, 1.0 / cfg.n, cfg.effective_inner_dt, cfg.eps, cfg.L, rng
        )
        r = new_r[0]
        stopped_steps += int(stopped[0])
        times.append(t)
        states.append(r.copy())
        t += rng.exponential(1.0 / cfg.n)
    logger.debug(f"Culling run seed={seed}: {len(times) - 1} skeleton steps, {stopped_steps} stopped early")
    return Trajectory(
        times=times,
        states=states,
        seed=seed,
        meta={"params": p.digest(), "skeleton_steps": len(times) - 1, "stopped_steps": stopped_steps},
        horizon=T,
    )


def sequential_sampling_ensemble(
    p: BranchingParams,
    z: MassLevel,
    r0: Sequence[float],
    cfg: SeqSampleConfig,
    T: float,
    reps: int,
    seed: int,
    chunk_size: int = CHUNK_SIZE,
) -> np.ndarray:
    """Terminal values of the culled process at T, shape (reps, d)."""
    kernel, r0 = _culling_setup(p, z, r0, cfg)

    def run(rows: int, rng: np.random.Generator) -> np.ndarray:
        steps = rng.poisson(cfg.n * T, size=rows)
        r = np.tile(r0, (rows, 1))
        for s in range(1, int(steps.max(initial=0)) + 1):
            active = steps >= s
            r[active], _ = advance_pair(
                kernel, r[active], z.z, 1.0 / cfg.n, cfg.effective_inner_dt, cfg.eps, cfg.L, rng
            )
        return r

    return run_chunked(run, reps, seed, chunk_size)


def _box(n: Sequence[int]):
    return itertools.product(*(range(nj + 1) for nj in n))


def _mono(r: np.ndarray, m: Sequence[int]) -> float:
    return float(np.prod([r[j] ** m[j] for j in range(len(m))]))


def generator_on_monomial(fp: FreqParams, n: Sequence[int], r: Sequence[float]) -> float:
    """
    A^(z) r^n as the finite sum over block-counting moves.

    sum_i 2 (c_i/z_i) C(n_i, 2) (r^(n-e_i) - r^n)
      + sum_i sum_{j != i} n_i b_ij (z_j/z_i) (r^(n-e_i+e_j) - r^n)
      + sum_i sum_k z_i C(n, k) lambda^i_{n,k} (r^(n-k+e_i) - r^n)
    """
    r = _check_r0(r, fp.d)
    n = tuple(int(x) for x in n)
    d = fp.d
    zz = fp.z.z
    base = _mono(r, n)
    terms = []
    for i in range(d):
        if n[i] >= 2:
            down = list(n)
            down[i] -= 1
            terms.append(fp.diff_coeffs[i] * comb(n[i], 2, exact=True) * (_mono(r, down) - base))
        if n[i] >= 1:
            for j in range(d):
                if j == i or fp.migration[i, j] == 0:
                    continue
                moved = list(n)
                moved[i] -= 1
                moved[j] += 1
                terms.append(n[i] * fp.migration[i, j] * (_mono(r, moved) - base))
    for k in _box(n):
        size = sum(k)
        if size == 0:
            continue
        multiplicity = math.prod(comb(nj, kj, exact=True) for nj, kj in zip(n, k))
        kk = np.array(k, dtype=float)
        rest = np.array(n, dtype=float) - kk
        for i in range(d):
            if size == 1 and k[i] == 1:
                continue
            pts, wts = fp.jump_atoms[i]
            if not len(pts):
                continue
            lam = float(wts @ np.prod(pts ** kk * (1.0 - pts) ** rest, axis=1))
            target = [n[j] - k[j] + (1 if j == i else 0) for j in range(d)]
            terms.append(zz[i] * multiplicity * lam * (_mono(r, target) - base))
    return math.fsum(terms)


def raw_generator_on_monomial(fp: FreqParams, n: Sequence[int], r: Sequence[float]) -> float:
    """
    A^(z) r^n straight from the generator with compensated jump integrals,
    using symbolic derivatives of the monomial.
    """
    r = _check_r0(r, fp.d)
    n = tuple(int(x) for x in n)
    d = fp.d
    zz = fp.z.z

    def f(x: np.ndarray) -> float:
        return _mono(x, n)

    def grad(i: int) -> float:
        if n[i] == 0:
            return 0.0
        m = list(n)
        m[i] -= 1
        return n[i] * _mono(r, m)

    def hess(i: int) -> float:
        if n[i] < 2:
            return 0.0
        m = list(n)
        m[i] -= 2
        return n[i] * (n[i] - 1) * _mono(r, m)

    fr = f(r)
    terms = []
    for i in range(d):
        g = grad(i)
        for j in range(d):
            if j != i:
                terms.append(fp.migration[i, j] * (r[j] - r[i]) * g)
        terms.append(0.5 * fp.diff_coeffs[i] * r[i] * (1.0 - r[i]) * hess(i))
        pts, wts = fp.jump_atoms[i]
        for u, lam in zip(pts, wts):
            up = f(r + (1.0 - r) * u) - fr - (1.0 - r[i]) * u[i] * g
            down = f(r - r * u) - fr + r[i] * u[i] * g
            terms.append(zz[i] * lam * (r[i] * up + (1.0 - r[i]) * down))
    return math.fsum(terms)
