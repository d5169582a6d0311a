"""Keyed deterministic random substreams derived from a single master seed.

Every consumer of randomness in the simulator draws from its own named
stream, and each stream supports random access by step index.  That way a
change in how many samples one consumer draws (a fault window triggering
retransmits, a shadow cycle, a skipped stage) can never shift the samples
seen by any other consumer, or by the same consumer at a later step.
"""

from __future__ import annotations

import random
import zlib

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    # splitmix64 finalizer: cheap, full-avalanche 64-bit mixing
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1F4E5787) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, tag: str, step: int = 0) -> int:
    """Stable 64-bit seed for (master_seed, tag, step).

    Uses crc32 for the tag, never the builtin hash(), which is randomized
    per process and would break run-to-run reproducibility.
    """
    base = _mix64((master_seed & _MASK64) ^ (zlib.crc32(tag.encode()) * _GOLDEN))
    return _mix64(base ^ ((step * _GOLDEN) & _MASK64))


class RandomStreams:
    """Family of named random streams sharing one master seed.

    ``at(tag, step)`` reseeds and returns the stream for ``tag`` positioned
    at ``step``.  The returned generator is only valid until the next
    ``at()`` call with the same tag; callers draw what they need
    immediately.  ``fresh(tag)`` returns an independent generator for batch
    sampling that the caller owns.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._rngs: dict[str, random.Random] = {}

    def at(self, tag: str, step: int) -> random.Random:
        rng = self._rngs.get(tag)
        if rng is None:
            rng = random.Random()
            self._rngs[tag] = rng
        rng.seed(derive_seed(self.master_seed, tag, step))
        return rng

    def fresh(self, tag: str) -> random.Random:
        return random.Random(derive_seed(self.master_seed, tag))
