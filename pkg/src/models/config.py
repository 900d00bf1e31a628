#!/usr/bin/env python3
"""
Library defaults for coalbranch.

The CLI overrides these from config.json (see src/cli/common/config.py);
library callers pass explicit arguments instead.
"""

import logging
import os

logger = logging.getLogger(__name__)

# Any CSBP coordinate above this ends the trajectory with the exploded flag
EXPLOSION_CAP = 1e12

# Exact backward evaluation refuses reachable state spaces larger than this
STATE_CAP = 100_000

# States whose outgoing transitions a chain keeps cached (least recently used evicted)
TRANSITION_CACHE_CAP = 20_000

# Duality z-score threshold (about 99.7% two-sided)
ZTHRESHOLD = 3.0

# Rows simulated per RNG stream in vectorised ensembles
CHUNK_SIZE = 2048

DEFAULT_MAX_THREADS = 4

# Culling guard rails: eps = fraction * min z, L = factor * max z + 1
DEFAULT_EPS_FRACTION = 0.5
DEFAULT_L_FACTOR = 2.0

THREADS_ENV = "COALBRANCH_THREADS"


def thread_count(default: int = DEFAULT_MAX_THREADS) -> int:
    """
    Worker threads for ensemble runs.

    COALBRANCH_THREADS caps parallelism when set to a positive integer.
    """
    cap = min(default, os.cpu_count() or 1)
    raw = os.getenv(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
            if value > 0:
                return value
            logger.warning(f"Ignoring non-positive {THREADS_ENV}={raw}")
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw}")
    return max(1, cap)
