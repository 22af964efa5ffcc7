from __future__ import annotations

import numpy as np


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def child(seed, *keys: int) -> np.random.SeedSequence:
    """Seed sequence for the substream of ``seed`` addressed by ``keys``.

    Streams are addressed by counters rather than spawned sequentially, so the
    draws for a given key never depend on execution order.
    """
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(
        ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in keys)
    )


def substream(seed, *keys: int) -> np.random.Generator:
    return np.random.default_rng(child(seed, *keys))
