"""
Deterministic seed derivation.

Rep (or chunk) k of a run seeded with s uses derive_seed(s, k), the (k+1)-th
output of a SplitMix64 stream started at s, so a single trajectory can be
reproduced outside this package.
"""

from typing import Tuple

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64(state: int) -> Tuple[int, int]:
    """Advance a SplitMix64 state; returns (new_state, output)."""
    state = (state + GOLDEN_GAMMA) & MASK64
    return state, _mix(state)


def derive_seed(seed: int, k: int) -> int:
    """The (k+1)-th SplitMix64 output from seed."""
    if k < 0:
        raise ValueError(f"Stream index must be non-negative, got {k}")
    return _mix((seed + (k + 1) * GOLDEN_GAMMA) & MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & MASK64)
