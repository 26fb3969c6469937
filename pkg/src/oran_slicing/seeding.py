"""Named random sub-streams derived from a single integer seed."""
import zlib

import numpy as np


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for ``name`` under ``seed``; stable across runs and platforms."""
    key = [int(seed), zlib.crc32(name.encode("utf-8"))] + [int(e) for e in extra]
    return np.random.default_rng(np.random.SeedSequence(key))


def child_seed(seed: int, name: str, *extra: int) -> int:
    """Derive an integer seed, e.g. for a sweep cell or a per-gNB agent."""
    return int(stream(seed, name, *extra).integers(0, 2**31 - 1))
