"""Seed handling.

Every random quantity is drawn from a PCG64 stream derived from a
``numpy.random.SeedSequence``.  Streams are split by *spawn keys* rather than
by calling ``SeedSequence.spawn`` (which is stateful), so the same
``(master_seed, key...)`` path always names the same stream:

    seed_sequence(master, r, 0)   -> LSA data for replicate r
    seed_sequence(master, r, 1)   -> bootstrap data for replicate r

A run seeded with ``s`` splits ``s`` into three children: chain states (0),
multiplicative A-noise (1) and additive b-noise (2).  Keeping the streams
separate makes every stream independent of the chunk size used to draw it.
"""

import numpy as np

STATES, A_NOISE, B_NOISE = 0, 1, 2


def seed_sequence(seed, *keys):
    """Return the SeedSequence addressed by ``seed`` followed by ``keys``."""
    if isinstance(seed, np.random.SeedSequence):
        base = seed
    else:
        if seed is None:
            raise TypeError("seed must be an integer or SeedSequence, not None")
        base = np.random.SeedSequence(int(seed))
    if not keys:
        return base
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(k) for k in keys))


def generator(seed, *keys):
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))
