"""Deterministic random-stream derivation.

Every stochastic component draws from a substream derived from an explicit
integer seed plus a structured key (purpose label, step index, ...).  Two
substreams with different keys are statistically independent, and drawing
from one never advances another, so A/B experiment variants consume
identical entropy budgets and differ only where intended.
"""

from __future__ import annotations

import numpy as np

# Stable purpose labels -> small integers mixed into the seed sequence.
_PURPOSES = {
    "data": 0,
    "init": 1,
    "z": 2,
    "zeta": 3,
    "tangent": 4,
    "mc": 5,
    "noise": 6,
}


def substream(seed: int, purpose: str, *key: int) -> np.random.Generator:
    """Return a generator for (seed, purpose, key), independent of all others."""
    if purpose not in _PURPOSES:
        raise ValueError(f"unknown stream purpose {purpose!r}")
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF, _PURPOSES[purpose]) + tuple(
        int(k) & 0xFFFFFFFFFFFFFFFF for k in key
    )
    return np.random.default_rng(np.random.SeedSequence(entropy))
