"""Counter-based splittable random number streams.

Every stochastic routine in the package draws from a named substream keyed by
(purpose string, integer indices).  Substreams are built on Philox, a
counter-based generator, so the same (seed, purpose, indices) triple yields the
same values whether entries are processed serially or split across workers.
"""

import zlib

import numpy as np

__all__ = ["RandomStreams"]


class RandomStreams:
    """Factory of statistically independent, reproducible substreams.

    The purpose string is hashed (crc32) into the SeedSequence spawn key, so
    distinct purposes give independent streams and no draw-order bookkeeping is
    needed between them.
    """

    def __init__(self, seed):
        self.seed = int(seed)

    def stream(self, purpose, *indices):
        """Return a fresh Generator for (purpose, *indices).

        Calling twice with the same arguments returns generators that produce
        identical sequences.
        """
        key = zlib.crc32(purpose.encode("utf-8"))
        spawn_key = (key,) + tuple(int(i) for i in indices)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=spawn_key)
        return np.random.Generator(np.random.Philox(ss))

    def spawn(self, purpose, *indices):
        """Child RandomStreams rooted at (purpose, *indices).

        Useful to hand a worker its own namespace while keeping global
        determinism.
        """
        key = zlib.crc32(purpose.encode("utf-8"))
        mix = (self.seed, key) + tuple(int(i) for i in indices)
        child_seed = zlib.crc32(repr(mix).encode("utf-8"))
        return RandomStreams((self.seed * 0x9E3779B9 + child_seed) % (2**63))

    def __repr__(self):
        return f"RandomStreams(seed={self.seed})"
