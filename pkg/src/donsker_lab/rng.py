"""Splittable, counter-based random streams.

A stream is identified by a root seed plus a path of integers. Children are
derived by appending to the path, so any replicate block can be regenerated
on its own without replaying the draws that precede it.
"""
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SeededStream", "BLOCK"]

# replicates are drawn in blocks of this size, each block from its own child
# stream; results therefore do not depend on how work is split across threads
BLOCK = 1024


@dataclass(frozen=True)
class SeededStream:
    root: int
    path: tuple = field(default_factory=tuple)

    def __post_init__(self):
        root = int(self.root)
        if not 0 <= root < 2 ** 64:
            raise ValueError("root seed must fit in 64 unsigned bits")
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "path", tuple(int(k) for k in self.path))
        if any(k < 0 for k in self.path):
            raise ValueError("stream path entries must be nonnegative")

    def child(self, *keys):
        return SeededStream(self.root, self.path + tuple(keys))

    def named(self, tag):
        """Child keyed by a string tag (stable across runs and platforms)."""
        key = int.from_bytes(str(tag).encode("utf8")[:8].ljust(8, b"\0"), "little")
        return self.child(key)

    def generator(self):
        ss = np.random.SeedSequence(self.root, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))

    def blocks(self, reps, block=BLOCK):
        """Yield ``(start, stop, generator)`` covering ``range(reps)``."""
        for b, start in enumerate(range(0, reps, block)):
            yield start, min(reps, start + block), self.child(b).generator()
