"""Counter-based, splittable random streams.

A stream is identified by ``(seed, path)``. The path is a tuple of
non-negative integers; string components (purpose tags) are mapped to
integers with CRC-32 so that a path like ``("epoch", 3, "client", 7)``
is stable across processes and Python versions. Streams with the same
identity replay the same draws, and sibling paths are independent
because each one keys its own Philox generator through
:class:`numpy.random.SeedSequence`.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _encode(key) -> int:
    if type(key) is int and key >= 0:
        return key
    if isinstance(key, (bool, np.bool_)):
        raise TypeError("boolean path components are ambiguous")
    if isinstance(key, (int, np.integer)):
        key = int(key)
        if key < 0:
            raise ValueError(f"path components must be non-negative, got {key}")
        return key
    if isinstance(key, str):
        # offset keeps tags from colliding with small integer indices
        return (1 << 32) + zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"unsupported path component {key!r}")


class RngStream:
    """Deterministic random stream addressed by a seed and a path.

    Parameters
    ----------
    seed : int
        64-bit unsigned root seed.
    path : tuple
        Sequence of ints and/or string tags.

    Notes
    -----
    The underlying generator is created lazily on the first draw, so
    building child streams that are never drawn from costs almost nothing.
    Draws from one stream object advance its own generator; to replay a
    draw, build a second stream with the same path.
    """

    __slots__ = ("seed", "path", "_key", "_gen")

    def __init__(self, seed: int, path: tuple = ()):
        seed = int(seed)
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must fit in 64 unsigned bits")
        self.seed = seed
        self.path = tuple(path)
        self._key = tuple(_encode(k) for k in self.path)
        self._gen = None

    def child(self, *keys) -> "RngStream":
        """Return the stream at ``path + keys``."""
        out = RngStream.__new__(RngStream)
        out.seed = self.seed
        out.path = self.path + keys
        out._key = self._key + tuple(_encode(k) for k in keys)
        out._gen = None
        return out

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=self._key)
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def choice(self, n: int, size: int):
        """Sample ``size`` distinct indices from ``range(n)``, sorted."""
        idx = self.generator.choice(n, size=size, replace=False)
        return np.sort(idx)

    def __eq__(self, other):
        if not isinstance(other, RngStream):
            return NotImplemented
        return self.seed == other.seed and self._key == other._key

    def __hash__(self):
        return hash((self.seed, self._key))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path!r})"


def as_stream(rng) -> RngStream:
    """Coerce an int seed or an existing stream to :class:`RngStream`."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))
