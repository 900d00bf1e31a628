#!/usr/bin/env python3
"""
Moment duality checks.

Forward side: E_r[prod_i R_i(t)^n_i] for the sequentially sampled process.
Backward side: E_n[prod_i r_i^N_i(t)] for the block-counting chain, either
by Monte Carlo or exactly through the matrix exponential of the generator
restricted to the states reachable from n.
"""

import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import expm_multiply

from src.core.coalescent import BlockCountingChain, BlockCounts, block_counting_ensemble
from src.core.ensemble import mean_and_stderr
from src.core.frequency import build_freq_params, limit_sde_ensemble
from src.core.transform import MassLevel
from src.models.config import STATE_CAP, ZTHRESHOLD
from src.models.errors import PreconditionError, StateSpaceOverflowError, StructuralError
from src.models.params import BranchingParams, CoalescentParams
from src.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

Params = Union[BranchingParams, CoalescentParams]

# Forward and backward values closer than this count as equal
EXACT_TOL = 1e-12


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    reps: int

    def to_dict(self) -> Dict[str, Any]:
        return {"value": self.value, "stderr": self.stderr, "reps": self.reps}


@dataclass
class DualityReport:
    """
    Forward vs backward moment comparison.

    zscore = (forward - backward) / sqrt(se_f^2 + se_b^2), and 0 whenever the
    two values differ by at most EXACT_TOL;
    passed iff |zscore| <= threshold.
    """

    forward: MomentEstimate
    backward: MomentEstimate
    zscore: float
    passed: bool
    threshold: float = ZTHRESHOLD
    exact_backward: bool = False
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "forward": self.forward.to_dict(),
            "backward": self.backward.to_dict(),
            "zscore": self.zscore if math.isfinite(self.zscore) else math.copysign(1e308, self.zscore),
            "passed": self.passed,
            "threshold": self.threshold,
            "exact_backward": self.exact_backward,
            "config": dict(self.config),
        }


def _vector(name: str, values: Sequence[float], d: int) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size != d:
        raise StructuralError(f"{name} has length {arr.size}, expected {d}")
    return arr


def _counts(n: Sequence[int], d: int) -> BlockCounts:
    n = tuple(int(x) for x in n)
    if len(n) != d:
        raise StructuralError(f"n has length {len(n)}, expected {d}")
    if any(x < 0 for x in n):
        raise PreconditionError(f"Block counts must be non-negative, got {n}")
    return n


def _check_cube(r: np.ndarray) -> None:
    if np.any(r < 0) or np.any(r > 1):
        raise PreconditionError(f"r must lie in [0,1]^d, got {r.tolist()}")


def _estimate(values: np.ndarray) -> MomentEstimate:
    mean, stderr = mean_and_stderr(values)
    return MomentEstimate(float(mean), float(stderr), int(values.shape[0]))


def forward_moment(
    p: BranchingParams,
    z: MassLevel,
    r: Sequence[float],
    n: Sequence[int],
    t: float,
    reps: int,
    dt: float,
    seed: int,
) -> MomentEstimate:
    """Sample mean and standard error of prod_i R_i(t)^n_i over reps limit-SDE paths."""
    r = _vector("r", r, p.d)
    _check_cube(r)
    n = _counts(n, p.d)
    if reps < 1:
        raise PreconditionError(f"reps must be positive, got {reps}")
    if sum(n) == 0:
        return MomentEstimate(1.0, 0.0, reps)
    fp = build_freq_params(p, z)
    terminal = limit_sde_ensemble(fp, r, t, dt, reps, seed)
    return _estimate(np.prod(terminal ** np.array(n, dtype=float), axis=1))


def backward_moment(
    params: Params,
    z: Optional[MassLevel],
    n: Sequence[int],
    r: Sequence[float],
    t: float,
    reps: int,
    seed: int,
) -> MomentEstimate:
    """Monte Carlo estimate of E_n[prod_i r_i^N_i(t)]."""
    r = _vector("r", r, params.d)
    _check_cube(r)
    n = _counts(n, params.d)
    if reps < 1:
        raise PreconditionError(f"reps must be positive, got {reps}")
    terminal = block_counting_ensemble(n, params, z, t, reps, seed)
    return _estimate(np.prod(r[None, :] ** terminal.astype(float), axis=1))


def reachable_states(n: Sequence[int], chain: BlockCountingChain, cap: int = STATE_CAP) -> List[BlockCounts]:
    """
    Breadth-first enumeration of the states reachable from n.

    Raises:
        StateSpaceOverflowError: If more than cap states are found
    """
    start = tuple(int(x) for x in n)
    seen = {start}
    order = [start]
    queue = deque([start])
    while queue:
        state = queue.popleft()
        for tr in chain.transitions(state):
            if tr.target not in seen:
                if len(order) >= cap:
                    raise StateSpaceOverflowError(cap)
                seen.add(tr.target)
                order.append(tr.target)
                queue.append(tr.target)
    return order


def exact_backward_moment(
    params: Params,
    z: Optional[MassLevel],
    n: Sequence[int],
    r: Sequence[float],
    t: float,
    state_cap: int = STATE_CAP,
) -> MomentEstimate:
    """
    E_n[prod_i r_i^N_i(t)] via expm_multiply on the reachable generator.

    Returned with stderr 0 and reps 1.
    """
    r = _vector("r", r, params.d)
    _check_cube(r)
    n = _counts(n, params.d)
    if not (t >= 0 and math.isfinite(t)):
        raise PreconditionError(f"t must be finite and non-negative, got {t}")
    chain = BlockCountingChain(params, z)
    states = reachable_states(n, chain, state_cap)
    index = {s: k for k, s in enumerate(states)}

    rows, cols, vals = [], [], []
    for k, s in enumerate(states):
        out = 0.0
        for tr in chain.transitions(s):
            rows.append(k)
            cols.append(index[tr.target])
            vals.append(tr.rate)
            out += tr.rate
        rows.append(k)
        cols.append(k)
        vals.append(-out)
    size = len(states)
    generator = csr_matrix((vals, (rows, cols)), shape=(size, size))
    payoff = np.array([np.prod(r ** np.array(s, dtype=float)) for s in states])
    logger.debug(f"Exact backward moment over {size} reachable states")
    value = expm_multiply(generator * t, payoff)[0] if t > 0 else payoff[0]
    return MomentEstimate(float(value), 0.0, 1)


def _zscore(forward: MomentEstimate, backward: MomentEstimate) -> float:
    diff = forward.value - backward.value
    if abs(diff) <= EXACT_TOL:
        return 0.0
    scale = math.sqrt(forward.stderr ** 2 + backward.stderr ** 2)
    if scale == 0:
        return math.copysign(math.inf, diff)
    return diff / scale


def duality_check(
    p: BranchingParams,
    z: MassLevel,
    r: Sequence[float],
    n: Sequence[int],
    t: float,
    reps: int,
    dt: float,
    seed: int,
    zthreshold: float = ZTHRESHOLD,
    exact_backward: bool = False,
    state_cap: int = STATE_CAP,
) -> DualityReport:
    """
    Run both sides of the duality and compare them.

    The forward side uses derive_seed(seed, 0), the backward side
    derive_seed(seed, 1); both run concurrently.
    """
    if not zthreshold > 0:
        raise PreconditionError(f"zthreshold must be positive, got {zthreshold}")

    def run_forward() -> MomentEstimate:
        return forward_moment(p, z, r, n, t, reps, dt, derive_seed(seed, 0))

    def run_backward() -> MomentEstimate:
        if exact_backward:
            return exact_backward_moment(p, z, n, r, t, state_cap)
        return backward_moment(p, z, n, r, t, reps, derive_seed(seed, 1))

    with ThreadPoolExecutor(max_workers=2) as executor:
        fwd_future = executor.submit(run_forward)
        bwd_future = executor.submit(run_backward)
        forward = fwd_future.result()
        backward = bwd_future.result()

    zscore = _zscore(forward, backward)
    passed = abs(zscore) <= zthreshold
    logger.info(
        f"Duality: forward={forward.value:.6f}±{forward.stderr:.2e} "
        f"backward={backward.value:.6f}±{backward.stderr:.2e} z={zscore:.3f} passed={passed}"
    )
    config = {
        "z": z.z.tolist(),
        "r": [float(x) for x in r],
        "n": [int(x) for x in n],
        "t": t,
        "reps": reps,
        "dt": dt,
        "seed": seed,
        "params": p.digest(),
    }
    return DualityReport(forward, backward, zscore, passed, zthreshold, exact_backward, config)
