"""Reproducible random streams.

Every Monte Carlo routine in the package draws from a Philox generator
(counter based, so streams are cheap to split) keyed by ``(seed, *key)``.
A replica ``r`` of an ensemble therefore always sees the same numbers no
matter how many replicas run, or in which order.
"""

from __future__ import annotations

import os

import numpy as np

SEED_ENV = "HOMOPOLYMER_SEED"

#: Paths are simulated in blocks of this many; block ``r`` uses ``stream(seed, tag, r)``.
REPLICA_BLOCK = 4096


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for stream ``key`` of base ``seed``."""
    if seed < 0 or any(k < 0 for k in key):
        raise ValueError("seeds and stream keys must be nonnegative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def resolve_seed(seed: int | None, default: int = 0) -> int:
    """Apply the ``HOMOPOLYMER_SEED`` override, if set."""
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return default if seed is None else int(seed)


def replica_sizes(n: int, block: int = REPLICA_BLOCK) -> list[int]:
    """Split ``n`` samples into fixed-size replica blocks (the last may be short)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    sizes = [block] * (n // block)
    if n % block:
        sizes.append(n % block)
    return sizes
