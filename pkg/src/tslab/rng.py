"""Counter-based random streams keyed by (seed, index, role).

Each Monte Carlo unit (a single episode, or a block of replicates) owns one
Philox stream per role, so results do not depend on how units are scheduled
across workers.
"""

from __future__ import annotations

import numpy as np

ROLES = {
    "theta": 0,
    "noise": 1,
    "sampler": 2,
    "instance": 3,
    "fuzz": 4,
    "config": 5,
    "check": 6,
}


def stream(seed: int, index: int, role: str) -> np.random.Generator:
    if role not in ROLES:
        raise KeyError(f"unknown stream role {role!r}")
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    ss = np.random.SeedSequence([int(seed), int(index), ROLES[role]])
    return np.random.Generator(np.random.Philox(ss))


def streams(seed: int, index: int, *roles: str) -> tuple[np.random.Generator, ...]:
    return tuple(stream(seed, index, r) for r in roles)
