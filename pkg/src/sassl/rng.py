"""Counter-based keyed random streams.

Every draw is addressed by ``(seed, key...)``: the same address always gives
the same numbers, and different addresses are independent. Transforms never
share a sequential generator, so enabling or disabling one transform cannot
shift the draws of another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_word(part) -> int:
    if isinstance(part, (int, np.integer)) and part >= 0:
        return int(part)
    digest = hashlib.blake2b(repr(part).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A node in a tree of named substreams rooted at ``seed``."""

    __slots__ = ("seed", "key")

    def __init__(self, seed: int, key: tuple = ()):
        self.seed = int(seed)
        self.key = tuple(key)

    def child(self, *parts) -> "RngStream":
        return RngStream(self.seed, self.key + parts)

    def __truediv__(self, part) -> "RngStream":
        return self.child(part)

    def generator(self, *parts) -> np.random.Generator:
        """A fresh Philox generator for the address ``key + parts``."""
        words = [_key_word(p) for p in self.key + parts]
        # tag distinguishes integer keys from hashed strings of the same value
        tags = [1 if isinstance(p, (int, np.integer)) else 2 for p in self.key + parts]
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(w for pair in zip(tags, words) for w in pair))
        return np.random.Generator(np.random.Philox(ss))

    def uniform(self, name: str, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator(name).uniform(low, high, size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key})"
