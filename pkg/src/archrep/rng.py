"""
Counter-based random streams.

A run is keyed by a 64-bit ``seed``; replicate ``r`` of a run draws from the
Philox stream whose 128-bit key is ``seed + 2**64 * stream``.  Streams with
different ``stream`` ids never overlap and do not depend on how many draws
other streams consumed, so replicates can be evaluated in any order.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed, stream=0):
    """Return a ``numpy.random.Generator`` for ``(seed, stream)``."""
    seed = int(seed)
    stream = int(stream)
    if not 0 <= seed <= _MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if not 0 <= stream <= _MASK64:
        raise ValueError("stream must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=seed | (stream << 64)))


def substream(stream, *labels):
    """Derive a stream id from a parent id and small integer labels."""
    out = int(stream)
    for lab in labels:
        out = (out * 1_000_003 + int(lab) + 1) & _MASK64
    return out
