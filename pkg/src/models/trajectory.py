#!/usr/bin/env python3
"""
Trajectory container shared by all simulators.
"""

import bisect
from dataclasses import dataclass, field
from typing import Any, Dict, List


@dataclass
class Trajectory:
    """
    Time-stamped path of a simulated state.

    states[k] holds on [times[k], times[k+1]); the last state holds until
    horizon. meta carries the parameter digest under "params" plus
    simulator-specific flags (absorbed, exploded, stopped, stop_time).
    """

    times: List[float]
    states: List[Any]
    seed: int
    meta: Dict[str, Any] = field(default_factory=dict)
    horizon: float = 0.0

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError(
                f"times and states differ in length ({len(self.times)} vs {len(self.states)})"
            )
        if not self.times or self.times[0] != 0.0:
            raise ValueError("Trajectory must start at time 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("Trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_state(self) -> Any:
        return self.states[-1]

    def state_at(self, t: float) -> Any:
        """State in force at time t (right-continuous)."""
        if t < 0:
            raise ValueError(f"Negative time {t}")
        k = bisect.bisect_right(self.times, t) - 1
        return self.states[k]
