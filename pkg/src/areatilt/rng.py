"""Reproducible random streams.

Every stream is a numpy ``Generator`` over the counter-based Philox bit
generator.  Replica ``r`` of a run seeded with ``seed`` always receives the
stream keyed by ``(seed, r)``, so serial and parallel schedules draw identical
numbers.  The same ``Generator`` objects are accepted by the jitted kernels.
"""

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed, *stream):
    """Return the Philox generator for ``seed`` and an optional stream path."""
    if seed is None:
        raise ValueError("a seed is required for reproducible streams")
    ss = np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def replica_rngs(seed, n, *stream):
    return [make_rng(seed, *stream, r) for r in range(n)]


def as_rng(rng):
    """Accept a Generator, an integer seed, or None (fresh entropy)."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.Generator(np.random.Philox())
    return make_rng(rng)
