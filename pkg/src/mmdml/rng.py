"""Deterministic named RNG substreams.

Every source of randomness in the package draws from its own substream,
keyed by a root seed plus a path of string labels.  Streams are independent
of each other and of the order in which they are created, which is what
makes column-wise generation and fold-wise fitting reproducible regardless
of execution order.
"""

import hashlib

import numpy as np


def substream(seed: int, *labels: str) -> np.random.Generator:
    """Return a generator for the substream identified by (seed, labels)."""
    digest = hashlib.sha256("/".join(labels).encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence(entropy=[int(seed) & 0xFFFFFFFFFFFFFFFF, *words])
    return np.random.Generator(np.random.PCG64(ss))
