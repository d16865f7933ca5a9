"""Named random substreams derived from a single root seed.

Every consumer of randomness asks for a stream by name, e.g.
``substream(seed, "mobility")`` or ``substream(seed, "attackers", 0.15)``.
Streams with different names are statistically independent, and a stream
only depends on its own key, so adding a new consumer never shifts the
draws of an existing one.
"""
import zlib

import numpy as np


def _key_word(part):
    if isinstance(part, (int, np.integer)) and not isinstance(part, bool):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(repr(part).encode("utf-8"))


def seed_words(root_seed, *names):
    return [int(root_seed) & 0xFFFFFFFFFFFFFFFF] + [_key_word(n) for n in names]


def substream(root_seed, *names):
    """Return a ``numpy.random.Generator`` keyed by ``(root_seed, *names)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_words(root_seed, *names))))


def derive_seed(root_seed, *names):
    """A 63-bit integer seed for a child stage (e.g. one topology)."""
    ss = np.random.SeedSequence(seed_words(root_seed, *names))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
