"""Deterministic random-number streams for parallel simulation.

Every stochastic task gets its own generator derived from the master seed
plus stable integer keys (strings are hashed with SHA-256, never with the
salted built-in ``hash``), so results are independent of worker count and
scheduling order.
"""

import hashlib

import numpy as np


def stable_key(value) -> int:
    """Map a string (or int) to a stable non-negative 64-bit integer."""
    if isinstance(value, (int, np.integer)):
        return int(value)
    digest = hashlib.sha256(str(value).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master_seed: int, *keys) -> np.random.Generator:
    """Generator for the stream identified by (master_seed, *keys)."""
    entropy = [int(master_seed)] + [stable_key(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
