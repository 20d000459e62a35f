"""Counter-based random streams keyed by (seed, iteration).

Every stochastic quantity in the package is drawn from a Philox stream
whose key is the pair (seed, k). Draws therefore depend only on the seed,
the iteration index and their position in the stream, never on call
order, which is what makes per-iteration noise replayable.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed, k):
    """Return a fresh generator for iteration ``k`` of the given seed."""
    key = np.array([int(seed) & _MASK64, int(k) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def substream(seed, k, index):
    """Generator for the ``index``-th independent substream of iteration ``k``."""
    mixed = (int(k) << 20) ^ int(index)
    key = np.array([int(seed) & _MASK64, mixed & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
