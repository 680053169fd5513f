"""Named deterministic RNG streams derived from a single root seed.

Every source of randomness in the package (splits, features, labels,
dropout, parameter init, graph sampling) draws from its own named stream
so that components can be varied independently without perturbing the
others.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for sub-stream `name` under root `seed`."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))


def substream_seed(seed: int, name: str, index: int) -> int:
    """Derive a child seed for indexed repetitions (one per split, worker, ...)."""
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key, int(index)))
    return int(ss.generate_state(1, np.uint64)[0])
