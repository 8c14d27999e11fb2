"""Reproducible stream derivation for simulation.

Every stochastic routine takes a :class:`SeedSpec`; independent substreams
(one per exponential-field copy, per bootstrap replicate, ...) are derived
through ``SeedSequence`` spawn keys, so results are bit-reproducible and
independent of batching or execution order.
"""

import zlib
from dataclasses import dataclass

import numpy as np

__all__ = ["SeedSpec"]


@dataclass(frozen=True)
class SeedSpec:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.stream < 0:
            raise ValueError("stream must be nonnegative")

    @classmethod
    def coerce(cls, value):
        if isinstance(value, (cls, _ChildSeed)):
            return value
        return cls(int(value))

    def _key(self, path):
        # crc32 for strings: process-independent, unlike built-in str hashing
        return tuple(
            zlib.crc32(p.encode()) if isinstance(p, str) else int(p) for p in path
        )

    def generator(self, *path):
        """Generator for the substream identified by ``path`` components."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *self._key(path)))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *path):
        """SeedSpec-like handle for nested derivation (replicates, copies)."""
        return _ChildSeed(self, path)


class _ChildSeed:
    def __init__(self, root, path):
        self._root = root
        self._path = path

    def generator(self, *path):
        return self._root.generator(*self._path, *path)

    def child(self, *path):
        return _ChildSeed(self._root, (*self._path, *path))
